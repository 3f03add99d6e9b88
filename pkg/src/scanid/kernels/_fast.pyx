# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: im2col / col2im and max-pooling forward/backward.

Contracts match scanid.kernels.numpy_backend exactly (NCHW layout,
stride-1 convolution unfolding, argmax as in-window flat index). Loops
parallelize over the batch dimension with OpenMP.
"""

import numpy as np
cimport numpy as cnp
cimport cython
from cython.parallel import prange

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int ph, int pw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = h + 2 * ph - kh + 1
    cdef int ow = w + 2 * pw - kw + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n * oh * ow, c * kh * kw), dtype=dtype)
    cdef real[:, ::1] cols = out_arr
    cdef Py_ssize_t bi, ci, oi, oj, i, j, ii, jj, row, col
    for bi in prange(n, nogil=True, schedule='static'):
        for oi in range(oh):
            for oj in range(ow):
                row = (bi * oh + oi) * ow + oj
                for ci in range(c):
                    for i in range(kh):
                        ii = oi + i - ph
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(kw):
                            jj = oj + j - pw
                            if jj < 0 or jj >= w:
                                continue
                            col = (ci * kh + i) * kw + j
                            cols[row, col] = x[bi, ci, ii, jj]
    return out_arr


def col2im(real[:, ::1] cols, int n, int c, int h, int w,
           int kh, int kw, int ph, int pw):
    cdef int oh = h + 2 * ph - kh + 1
    cdef int ow = w + 2 * pw - kw + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = out_arr
    cdef Py_ssize_t bi, ci, oi, oj, i, j, ii, jj, row, col
    for bi in prange(n, nogil=True, schedule='static'):
        for oi in range(oh):
            for oj in range(ow):
                row = (bi * oh + oi) * ow + oj
                for ci in range(c):
                    for i in range(kh):
                        ii = oi + i - ph
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(kw):
                            jj = oj + j - pw
                            if jj < 0 or jj >= w:
                                continue
                            col = (ci * kh + i) * kw + j
                            dx[bi, ci, ii, jj] += cols[row, col]
    return out_arr


def maxpool_forward(real[:, :, :, ::1] x, int k, int stride, int pad):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = (h + 2 * pad - k) / stride + 1
    cdef int ow = (w + 2 * pad - k) / stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int32)
    cdef real[:, :, :, ::1] out = out_arr
    cdef int[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t bi, ci, oi, oj, i, j, ii, jj
    cdef real best, v
    cdef int besti
    for bi in prange(n, nogil=True, schedule='static'):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    best = 0
                    besti = -1
                    for i in range(k):
                        ii = oi * stride + i - pad
                        if ii < 0 or ii >= h:
                            continue
                        for j in range(k):
                            jj = oj * stride + j - pad
                            if jj < 0 or jj >= w:
                                continue
                            v = x[bi, ci, ii, jj]
                            if besti < 0 or v > best:
                                best = v
                                besti = i * k + j
                    out[bi, ci, oi, oj] = best
                    arg[bi, ci, oi, oj] = besti
    return out_arr, arg_arr


def maxpool_backward(real[:, :, :, ::1] dout, int[:, :, :, ::1] argmax,
                     int n, int c, int h, int w, int k, int stride, int pad):
    cdef int oh = dout.shape[2], ow = dout.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = out_arr
    cdef Py_ssize_t bi, ci, oi, oj, ii, jj
    cdef int a
    for bi in prange(n, nogil=True, schedule='static'):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    a = argmax[bi, ci, oi, oj]
                    if a < 0:
                        continue
                    ii = oi * stride + a / k - pad
                    jj = oj * stride + a % k - pad
                    dx[bi, ci, ii, jj] += dout[bi, ci, oi, oj]
    return out_arr
