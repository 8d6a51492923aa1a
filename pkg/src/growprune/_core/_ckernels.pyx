# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: BLAS-backed affine forward/backward and the fused
momentum/mask update. float64 only; row-major inputs.

The row-major arrays are fed to Fortran-order dgemm by treating each stored
matrix as the transpose of a column-major one and computing the transposed
product, so no copies are made.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef void _gemm(char transa, char transb, int m, int n, int k,
                double* a, int lda, double* b, int ldb, double* c, int ldc) nogil:
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&transa, &transb, &m, &n, &k, &one, a, &lda, b, &ldb, &zero, c, &ldc)


def affine(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """y = x @ w.T + b; x is (B, N), w is (M, N), b is (M,)."""
    cdef int bs = x.shape[0]
    cdef int n = x.shape[1]
    cdef int m = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((bs, m), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    if bs > 0:
        with nogil:
            # y^T (M x B, col-major) = w (M x N) @ x^T (N x B)
            _gemm(b'T', b'N', m, bs, n, &w[0, 0], n, &x[0, 0], n, &y[0, 0], m)
            for i in range(bs):
                for j in range(m):
                    y[i, j] += b[j]
    return out


def affine_backward(double[:, ::1] gy, double[:, ::1] x, double[:, ::1] w):
    """Gradients of `affine`: (gx, gw, gb) with gw dense (mask-free)."""
    cdef int bs = gy.shape[0]
    cdef int m = gy.shape[1]
    cdef int n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] gx_arr = np.empty((bs, n), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gw_arr = np.zeros((m, n), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] gb_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j
    if bs > 0:
        with nogil:
            # gx^T (N x B) = w^T (N x M) @ gy^T (M x B)
            _gemm(b'N', b'N', n, bs, m, &w[0, 0], n, &gy[0, 0], m, &gx[0, 0], n)
            # gw^T (N x M) = x^T (N x B) @ gy (B x M)
            _gemm(b'N', b'T', n, m, bs, &x[0, 0], n, &gy[0, 0], m, &gw[0, 0], n)
            for i in range(bs):
                for j in range(m):
                    gb[j] += gy[i, j]
    return gx_arr, gw_arr, gb_arr


def momentum_update(double[::1] value, double[::1] velocity, double[::1] grad,
                    unsigned char[::1] mask, double lr, double momentum):
    """Fused v ← μv + g; value ← value − ηv; value ← value ⊗ mask (mask may be empty)."""
    cdef Py_ssize_t n = value.shape[0]
    cdef bint masked = mask.shape[0] == n
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            velocity[i] = momentum * velocity[i] + grad[i]
            value[i] -= lr * velocity[i]
            if masked and mask[i] == 0:
                value[i] = 0.0
