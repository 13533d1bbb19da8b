# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grouped 1D convolution kernels.

All arrays are C-contiguous float64. Inputs arrive pre-padded along the
time axis, so the loops never need boundary checks. The pure-numpy
equivalents live in kernels/_reference.py; kernels/__init__.py picks one
backend at import time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv1d_forward(double[:, :, ::1] xp, double[:, :, ::1] w,
                   int stride, int groups):
    """xp: (B, Cin, Tp) padded input, w: (Cout, Cin/G, K) -> (B, Cout, Tout)."""
    cdef Py_ssize_t B = xp.shape[0], Cin = xp.shape[1], Tp = xp.shape[2]
    cdef Py_ssize_t Cout = w.shape[0], cg = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t Tout = (Tp - K) // stride + 1
    cdef Py_ssize_t b, g, o, c, k, t, co, ci
    cdef double wv
    out = np.zeros((B, Cout, Tout), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    for b in range(B):
        for g in range(groups):
            for o in range(cog):
                co = g * cog + o
                for c in range(cg):
                    ci = g * cg + c
                    for k in range(K):
                        wv = w[co, c, k]
                        for t in range(Tout):
                            y[b, co, t] += wv * xp[b, ci, t * stride + k]
    return out


def conv1d_backward_x(double[:, :, ::1] gy, double[:, :, ::1] w,
                      int stride, int groups, Py_ssize_t Tp):
    """Gradient w.r.t. the padded input: (B, Cin, Tp)."""
    cdef Py_ssize_t B = gy.shape[0], Cout = gy.shape[1], Tout = gy.shape[2]
    cdef Py_ssize_t cg = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t Cin = groups * cg
    cdef Py_ssize_t b, g, o, c, k, t, co, ci
    cdef double wv
    out = np.zeros((B, Cin, Tp), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    for b in range(B):
        for g in range(groups):
            for o in range(cog):
                co = g * cog + o
                for c in range(cg):
                    ci = g * cg + c
                    for k in range(K):
                        wv = w[co, c, k]
                        for t in range(Tout):
                            gx[b, ci, t * stride + k] += wv * gy[b, co, t]
    return out


def conv1d_backward_w(double[:, :, ::1] gy, double[:, :, ::1] xp,
                      int stride, int groups, Py_ssize_t K):
    """Gradient w.r.t. the weights: (Cout, Cin/G, K)."""
    cdef Py_ssize_t B = gy.shape[0], Cout = gy.shape[1], Tout = gy.shape[2]
    cdef Py_ssize_t Cin = xp.shape[1]
    cdef Py_ssize_t cg = Cin // groups
    cdef Py_ssize_t cog = Cout // groups
    cdef Py_ssize_t b, g, o, c, k, t, co, ci
    cdef double acc
    out = np.zeros((Cout, cg, K), dtype=np.float64)
    cdef double[:, :, ::1] gw = out
    for b in range(B):
        for g in range(groups):
            for o in range(cog):
                co = g * cog + o
                for c in range(cg):
                    ci = g * cg + c
                    for k in range(K):
                        acc = 0.0
                        for t in range(Tout):
                            acc += gy[b, co, t] * xp[b, ci, t * stride + k]
                        gw[co, c, k] += acc
    return out
