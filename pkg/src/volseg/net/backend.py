"""Kernel backend selection: compiled extension if present, numpy otherwise.

Set VOLSEG_FORCE_NUMPY=1 to force the fallback (used by the benchmark and
the backend-equivalence tests).
"""

import os

import numpy as np

from . import kernels_np

if os.environ.get("VOLSEG_FORCE_NUMPY") == "1":
    _impl = kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "ext"
    except ImportError:
        _impl = kernels_np
        BACKEND = "numpy"

conv_out_dims = kernels_np.conv_out_dims


def _prep(a):
    a = np.ascontiguousarray(a)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float32)
    return a


def conv3d_forward(x, w, stride=1, dilation=1, padding=0):
    x = _prep(x)
    return _impl.conv3d_forward(x, _prep(w).astype(x.dtype, copy=False), stride,
                                dilation, padding)


def conv3d_grad_input(gy, w, stride, dilation, padding, in_spatial):
    gy = _prep(gy)
    return _impl.conv3d_grad_input(gy, _prep(w).astype(gy.dtype, copy=False), stride,
                                   dilation, padding, tuple(in_spatial))


def conv3d_grad_weight(x, gy, stride, dilation, padding, ksize):
    x = _prep(x)
    return _impl.conv3d_grad_weight(x, _prep(gy).astype(x.dtype, copy=False), stride,
                                    dilation, padding, ksize)
