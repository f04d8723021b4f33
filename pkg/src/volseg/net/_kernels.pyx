# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled convolution kernels: direct-loop cross-correlation.

Same three entry points and array layout as kernels_np; float32 and
float64 supported via a fused type.  No physical padding: out-of-range
taps are skipped by clamping the output ranges per kernel offset.
"""

import numpy as np

cimport cython


ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t p, Py_ssize_t off, Py_ssize_t s) noexcept:
    # smallest out index with out*s - p + off >= 0
    cdef Py_ssize_t num = p - off
    if num <= 0:
        return 0
    return (num + s - 1) // s


cdef inline Py_ssize_t _hi(Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t p,
                           Py_ssize_t off, Py_ssize_t s) noexcept:
    # one past the largest out index with out*s - p + off <= n_in - 1
    cdef Py_ssize_t top = (n_in - 1 + p - off) // s + 1
    if top > n_out:
        return n_out
    return top


def conv3d_forward(real[:, :, :, :, ::1] x, real[:, :, :, :, ::1] w,
                   int stride=1, int dilation=1, int padding=0):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t X = x.shape[2], Y = x.shape[3], Z = x.shape[4]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t s = stride, d = dilation, p = padding
    cdef Py_ssize_t span = d * (K - 1) + 1
    cdef Py_ssize_t OX = (X + 2 * p - span) // s + 1
    cdef Py_ssize_t OY = (Y + 2 * p - span) // s + 1
    cdef Py_ssize_t OZ = (Z + 2 * p - span) // s + 1
    if OX <= 0 or OY <= 0 or OZ <= 0:
        raise ValueError("effective kernel exceeds padded extent")
    if real is float:
        y_arr = np.zeros((B, O, OX, OY, OZ), dtype=np.float32)
    else:
        y_arr = np.zeros((B, O, OX, OY, OZ), dtype=np.float64)
    cdef real[:, :, :, :, ::1] y = y_arr
    cdef Py_ssize_t b, o, c, u, v, t, ox, oy, oz, ix, iy, iz
    cdef Py_ssize_t xlo, xhi, ylo, yhi, zlo, zhi, du, dv, dt
    cdef real wv
    for b in range(B):
        for o in range(O):
            for c in range(C):
                for u in range(K):
                    du = u * d
                    xlo = _lo(p, du, s); xhi = _hi(X, OX, p, du, s)
                    for v in range(K):
                        dv = v * d
                        ylo = _lo(p, dv, s); yhi = _hi(Y, OY, p, dv, s)
                        for t in range(K):
                            dt = t * d
                            zlo = _lo(p, dt, s); zhi = _hi(Z, OZ, p, dt, s)
                            wv = w[o, c, u, v, t]
                            for ox in range(xlo, xhi):
                                ix = ox * s - p + du
                                for oy in range(ylo, yhi):
                                    iy = oy * s - p + dv
                                    for oz in range(zlo, zhi):
                                        iz = oz * s - p + dt
                                        y[b, o, ox, oy, oz] += wv * x[b, c, ix, iy, iz]
    return y_arr


def conv3d_grad_input(real[:, :, :, :, ::1] gy, real[:, :, :, :, ::1] w,
                      int stride, int dilation, int padding, in_spatial):
    cdef Py_ssize_t B = gy.shape[0], O = gy.shape[1]
    cdef Py_ssize_t OX = gy.shape[2], OY = gy.shape[3], OZ = gy.shape[4]
    cdef Py_ssize_t C = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t s = stride, d = dilation, p = padding
    cdef Py_ssize_t X = in_spatial[0], Y = in_spatial[1], Z = in_spatial[2]
    if real is float:
        gx_arr = np.zeros((B, C, X, Y, Z), dtype=np.float32)
    else:
        gx_arr = np.zeros((B, C, X, Y, Z), dtype=np.float64)
    cdef real[:, :, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, o, c, u, v, t, ox, oy, oz, ix, iy, iz
    cdef Py_ssize_t xlo, xhi, ylo, yhi, zlo, zhi, du, dv, dt
    cdef real wv
    for b in range(B):
        for o in range(O):
            for c in range(C):
                for u in range(K):
                    du = u * d
                    xlo = _lo(p, du, s); xhi = _hi(X, OX, p, du, s)
                    for v in range(K):
                        dv = v * d
                        ylo = _lo(p, dv, s); yhi = _hi(Y, OY, p, dv, s)
                        for t in range(K):
                            dt = t * d
                            zlo = _lo(p, dt, s); zhi = _hi(Z, OZ, p, dt, s)
                            wv = w[o, c, u, v, t]
                            for ox in range(xlo, xhi):
                                ix = ox * s - p + du
                                for oy in range(ylo, yhi):
                                    iy = oy * s - p + dv
                                    for oz in range(zlo, zhi):
                                        iz = oz * s - p + dt
                                        gx[b, c, ix, iy, iz] += wv * gy[b, o, ox, oy, oz]
    return gx_arr


def conv3d_grad_weight(real[:, :, :, :, ::1] x, real[:, :, :, :, ::1] gy,
                       int stride, int dilation, int padding, int ksize):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t X = x.shape[2], Y = x.shape[3], Z = x.shape[4]
    cdef Py_ssize_t O = gy.shape[1]
    cdef Py_ssize_t OX = gy.shape[2], OY = gy.shape[3], OZ = gy.shape[4]
    cdef Py_ssize_t s = stride, d = dilation, p = padding, K = ksize
    if real is float:
        gw_arr = np.zeros((O, C, K, K, K), dtype=np.float32)
    else:
        gw_arr = np.zeros((O, C, K, K, K), dtype=np.float64)
    cdef real[:, :, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, c, u, v, t, ox, oy, oz, ix, iy, iz
    cdef Py_ssize_t xlo, xhi, ylo, yhi, zlo, zhi, du, dv, dt
    cdef double acc
    for b in range(B):
        for o in range(O):
            for c in range(C):
                for u in range(K):
                    du = u * d
                    xlo = _lo(p, du, s); xhi = _hi(X, OX, p, du, s)
                    for v in range(K):
                        dv = v * d
                        ylo = _lo(p, dv, s); yhi = _hi(Y, OY, p, dv, s)
                        for t in range(K):
                            dt = t * d
                            zlo = _lo(p, dt, s); zhi = _hi(Z, OZ, p, dt, s)
                            acc = 0.0
                            for ox in range(xlo, xhi):
                                ix = ox * s - p + du
                                for oy in range(ylo, yhi):
                                    iy = oy * s - p + dv
                                    for oz in range(zlo, zhi):
                                        iz = oz * s - p + dt
                                        acc += gy[b, o, ox, oy, oz] * x[b, c, ix, iy, iz]
                            gw[o, c, u, v, t] += <real> acc
    return gw_arr
