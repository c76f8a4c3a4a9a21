# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot training path.

Accumulation order is fixed (ascending reduction index, one multiply and one
add per term) and must stay in lockstep with ``_core_py``: the test suite
asserts bit-identical float64 output between the two backends. Compiled with
-ffp-contract=off so no FMA contraction changes the rounding sequence.
"""

import numpy as np

BACKEND_NAME = "cython"


def affine_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t d_in = x.shape[1]
    cdef Py_ssize_t m = w.shape[0]
    out_arr = np.empty((batch, m))
    cdef double[:, ::1] out = out_arr
    # k-major weight layout lets the inner j-loop vectorize without
    # reassociating any accumulation.
    wt_arr = np.ascontiguousarray(np.asarray(w).T)
    cdef double[:, ::1] wt = wt_arr
    cdef Py_ssize_t i, j, k
    cdef double xv
    for i in range(batch):
        for j in range(m):
            out[i, j] = b[j]
        for k in range(d_in):
            xv = x[i, k]
            for j in range(m):
                out[i, j] = out[i, j] + wt[k, j] * xv
    return out_arr


def affine_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] grad_out):
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t d_in = x.shape[1]
    cdef Py_ssize_t m = w.shape[0]
    dx_arr = np.zeros((batch, d_in))
    dw_arr = np.zeros((m, d_in))
    db_arr = np.zeros(m)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, j, k
    cdef double gv
    for i in range(batch):
        for j in range(m):
            gv = grad_out[i, j]
            for k in range(d_in):
                dx[i, k] = dx[i, k] + gv * w[j, k]
                dw[j, k] = dw[j, k] + gv * x[i, k]
            db[j] = db[j] + gv
    return dx_arr, dw_arr, db_arr


def relu_forward(double[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    out_arr = np.empty((rows, cols))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(rows):
        for j in range(cols):
            out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_backward(double[:, ::1] x, double[:, ::1] grad_out):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    out_arr = np.empty((rows, cols))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(rows):
        for j in range(cols):
            out[i, j] = grad_out[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr
