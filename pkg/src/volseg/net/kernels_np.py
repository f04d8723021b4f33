"""Pure-numpy convolution kernels (fallback backend).

Per-kernel-offset slicing plus BLAS contractions: for each of the k^3 taps
the strided input window is contracted against one weight slice.  The
compiled extension in _kernels.pyx implements the same three entry points
with direct loops; volseg.net.backend picks one at import.

Array layout: activations (B, C, X, Y, Z) C-contiguous, weights
(C_out, C_in, k, k, k).  Cross-correlation (no kernel flip).
"""

import numpy as np


def conv_out_dims(in_spatial, ksize, stride, dilation, padding):
    span = dilation * (ksize - 1) + 1
    return tuple((n + 2 * padding - span) // stride + 1 for n in in_spatial)


def conv3d_forward(x, w, stride=1, dilation=1, padding=0):
    b, c, *spatial = x.shape
    o, c2, k, _, _ = w.shape
    if c != c2:
        raise ValueError(f"channel mismatch: input {c}, kernel {c2}")
    s, d, p = stride, dilation, padding
    ox, oy, oz = conv_out_dims(spatial, k, s, d, p)
    if min(ox, oy, oz) <= 0:
        raise ValueError("effective kernel exceeds padded extent")
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    yl = np.zeros((b, ox, oy, oz, o), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            for t in range(k):
                xs = xp[:, :,
                        u * d: u * d + s * ox: s,
                        v * d: v * d + s * oy: s,
                        t * d: t * d + s * oz: s]
                yl += np.tensordot(xs, w[:, :, u, v, t], axes=([1], [1]))
    return np.ascontiguousarray(yl.transpose(0, 4, 1, 2, 3))


def conv3d_grad_input(gy, w, stride, dilation, padding, in_spatial):
    b, o, ox, oy, oz = gy.shape
    _, c, k, _, _ = w.shape
    s, d, p = stride, dilation, padding
    ix, iy, iz = in_spatial
    gxp = np.zeros((b, c, ix + 2 * p, iy + 2 * p, iz + 2 * p), dtype=gy.dtype)
    for u in range(k):
        for v in range(k):
            for t in range(k):
                contrib = np.tensordot(gy, w[:, :, u, v, t], axes=([1], [0]))
                gxp[:, :,
                    u * d: u * d + s * ox: s,
                    v * d: v * d + s * oy: s,
                    t * d: t * d + s * oz: s] += contrib.transpose(0, 4, 1, 2, 3)
    if p == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, p:p + ix, p:p + iy, p:p + iz])


def conv3d_grad_weight(x, gy, stride, dilation, padding, ksize):
    b, c, *spatial = x.shape
    _, o, ox, oy, oz = gy.shape
    s, d, p, k = stride, dilation, padding, ksize
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    gw = np.empty((o, c, k, k, k), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            for t in range(k):
                xs = xp[:, :,
                        u * d: u * d + s * ox: s,
                        v * d: v * d + s * oy: s,
                        t * d: t * d + s * oz: s]
                gw[:, :, u, v, t] = np.tensordot(
                    gy, xs, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    return gw
