# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels.

Same contracts and accumulation order as ``_pykernels``.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def im2col(const double[:, :, :, ::1] xp, int kh, int kw, int sh, int sw, int ho, int wo):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    out_arr = np.empty((n, c * kh * kw, ho * wo), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, y0
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(ho):
                            y0 = oy * sh + i
                            for ox in range(wo):
                                out[b, row, oy * wo + ox] = xp[b, ch, y0, ox * sw + j]
    return out_arr


def col2im(const double[:, :, ::1] cols, int n, int c, int hp, int wp,
           int kh, int kw, int sh, int sw, int ho, int wo):
    out_arr = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, y0
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(ho):
                            y0 = oy * sh + i
                            for ox in range(wo):
                                out[b, ch, y0, ox * sw + j] += cols[b, row, oy * wo + ox]
    return out_arr


def maxpool_forward(const double[:, :, :, ::1] xp, int kh, int kw, int sh, int sw, int ho, int wo):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1], wp = xp.shape[3]
    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    arg_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ch, oy, ox, i, j, y, x, best_idx
    cdef double best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        y = oy * sh
                        x = ox * sw
                        best = xp[b, ch, y, x]
                        best_idx = y * wp + x
                        for i in range(kh):
                            for j in range(kw):
                                v = xp[b, ch, y + i, x + j]
                                if v > best:
                                    best = v
                                    best_idx = (y + i) * wp + x + j
                        out[b, ch, oy, ox] = best
                        arg[b, ch, oy, ox] = best_idx
    return out_arr, arg_arr


def maxpool_backward(const double[:, :, :, ::1] gout, const long long[:, :, :, ::1] arg,
                     int n, int c, int hp, int wp):
    out_arr = np.zeros((n, c, hp * wp), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, oy, ox
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        out[b, ch, arg[b, ch, oy, ox]] += gout[b, ch, oy, ox]
    return out_arr.reshape(n, c, hp, wp)
