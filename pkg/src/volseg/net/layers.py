"""Differentiable 3D layers built on the kernel backend.

Weight init follows the training recipe: zero biases, Gaussian weights
with std 0.01; transposed-conv kernels start as constant interpolation
weights so upsampling preserves constants at init.
"""

import numpy as np

from . import backend
from .autograd import Node, Param

WEIGHT_STD = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Conv3d:
    """Dilated cross-correlation, padding dilation*(k-1)/2 unless overridden."""

    def __init__(self, name, in_ch, out_ch, ksize=3, stride=1, dilation=1,
                 padding=None, rng=None, dtype=np.float32):
        if ksize % 2 == 0 and padding is None:
            raise ValueError("even kernels need an explicit padding")
        self.stride = stride
        self.dilation = dilation
        self.padding = dilation * (ksize - 1) // 2 if padding is None else padding
        self.ksize = ksize
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, WEIGHT_STD,
                       (out_ch, in_ch, ksize, ksize, ksize)).astype(dtype)
        self.w = Param(w, f"{name}.w")
        self.b = Param(np.zeros(out_ch, dtype=dtype), f"{name}.b")

    def params(self):
        return [self.w, self.b]

    def __call__(self, x):
        w, b = self.w, self.b
        st, dil, pad = self.stride, self.dilation, self.padding
        in_spatial = x.data.shape[2:]
        y = backend.conv3d_forward(x.data, w.data, st, dil, pad)
        y += b.data.reshape(1, -1, 1, 1, 1)

        def back(g):
            gx = backend.conv3d_grad_input(g, w.data, st, dil, pad, in_spatial)
            gw = backend.conv3d_grad_weight(x.data, g, st, dil, pad, self.ksize)
            gb = g.sum(axis=(0, 2, 3, 4))
            return gx, gw, gb

        return Node(y, (x, w, b), back)


class ConvTranspose3d:
    """Stride-equal-kernel transposed convolution for upsampling.

    Weight shape (in_ch, out_ch, k, k, k); init is 1/in_ch everywhere, the
    constant-preserving interpolation for kernel == stride.
    """

    def __init__(self, name, in_ch, out_ch, ksize=2, stride=2,
                 dtype=np.float32):
        self.ksize = ksize
        self.stride = stride
        w = np.full((in_ch, out_ch, ksize, ksize, ksize), 1.0 / in_ch,
                    dtype=dtype)
        self.w = Param(w, f"{name}.w")
        self.b = Param(np.zeros(out_ch, dtype=dtype), f"{name}.b")

    def params(self):
        return [self.w, self.b]

    def __call__(self, x):
        w, b = self.w, self.b
        s, k = self.stride, self.ksize
        out_spatial = tuple((n - 1) * s + k for n in x.data.shape[2:])
        y = backend.conv3d_grad_input(x.data, w.data, s, 1, 0, out_spatial)
        y += b.data.reshape(1, -1, 1, 1, 1)

        def back(g):
            gx = backend.conv3d_forward(g, w.data, s, 1, 0)
            gw = backend.conv3d_grad_weight(g, x.data, s, 1, 0, k)
            gb = g.sum(axis=(0, 2, 3, 4))
            return gx, gw, gb

        return Node(y, (x, w, b), back)


class BatchNorm3d:
    """Per-channel batch norm with running moments.

    training=True normalizes by batch statistics and updates the running
    moments; training=False uses the frozen moments, making the forward
    deterministic and batch-size-invariant per sample.
    """

    def __init__(self, name, channels, dtype=np.float32):
        self.gamma = Param(np.ones(channels, dtype=dtype), f"{name}.gamma")
        self.beta = Param(np.zeros(channels, dtype=dtype), f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.name = name
        self.training = True

    def params(self):
        return [self.gamma, self.beta]

    def state_tensors(self):
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}

    def load_state_tensor(self, name, value):
        if name.endswith("running_mean"):
            self.running_mean = value.astype(np.float64)
        else:
            self.running_var = value.astype(np.float64)

    def __call__(self, x):
        gamma, beta = self.gamma, self.beta
        xd = x.data
        axes = (0, 2, 3, 4)
        shape = (1, -1, 1, 1, 1)
        if self.training:
            mean = xd.mean(axis=axes, dtype=np.float64)
            var = xd.var(axis=axes, dtype=np.float64)
            self.running_mean = ((1 - BN_MOMENTUM) * self.running_mean
                                 + BN_MOMENTUM * mean)
            self.running_var = ((1 - BN_MOMENTUM) * self.running_var
                                + BN_MOMENTUM * var)
            inv_std = (1.0 / np.sqrt(var + BN_EPS)).astype(xd.dtype)
            xhat = (xd - mean.astype(xd.dtype).reshape(shape)) \
                * inv_std.reshape(shape)
            y = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)
            n = xd.shape[0] * xd.shape[2] * xd.shape[3] * xd.shape[4]

            def back(g):
                dbeta = g.sum(axis=axes)
                dgamma = (g * xhat).sum(axis=axes)
                dx = (gamma.data * inv_std).reshape(shape) / n * (
                    n * g - dbeta.reshape(shape) - xhat * dgamma.reshape(shape)
                )
                return dx.astype(xd.dtype), dgamma, dbeta

            return Node(y, (x, gamma, beta), back)

        inv_std = (1.0 / np.sqrt(self.running_var + BN_EPS)).astype(xd.dtype)
        mean = self.running_mean.astype(xd.dtype)
        xhat = (xd - mean.reshape(shape)) * inv_std.reshape(shape)
        y = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

        def back_eval(g):
            dbeta = g.sum(axis=axes)
            dgamma = (g * xhat).sum(axis=axes)
            dx = g * (gamma.data * inv_std).reshape(shape)
            return dx, dgamma, dbeta

        return Node(y, (x, gamma, beta), back_eval)


class ConvBnRelu:
    """Conv -> batch norm -> ReLU, the standard layer unit here."""

    def __init__(self, name, in_ch, out_ch, ksize=3, stride=1, dilation=1,
                 rng=None):
        self.conv = Conv3d(f"{name}.conv", in_ch, out_ch, ksize, stride,
                           dilation, rng=rng)
        self.bn = BatchNorm3d(f"{name}.bn", out_ch)

    def params(self):
        return self.conv.params() + self.bn.params()

    def bns(self):
        return [self.bn]

    def __call__(self, x):
        from .autograd import relu
        return relu(self.bn(self.conv(x)))
