# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise gravity kernels.

Mirrors the contracts of ``_pure.py``; see that module for documentation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

BACKEND = "cython"


def min_pair_distance(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = INFINITY, r2, diff
    cdef Py_ssize_t bi = -1, bj = -1
    if n < 2:
        return INFINITY, -1, -1
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                r2 += diff * diff
            if r2 < best:
                best = r2
                bi = i
                bj = j
    return sqrt(best), bi, bj


def path_potentials(double[:, :, ::1] xs, double[::1] m):
    cdef Py_ssize_t K = xs.shape[0]
    cdef Py_ssize_t n = xs.shape[1]
    cdef Py_ssize_t d = xs.shape[2]
    cdef Py_ssize_t k, i, j, c
    cdef double r2, r, diff, u
    U_arr = np.zeros(K)
    dmin_arr = np.full(K, np.inf)
    cdef double[::1] U = U_arr
    cdef double[::1] dmin = dmin_arr
    if n < 2:
        return U_arr, dmin_arr
    for k in range(K):
        u = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    diff = xs[k, i, c] - xs[k, j, c]
                    r2 += diff * diff
                r = sqrt(r2)
                if r < dmin[k]:
                    dmin[k] = r
                if r > 0.0:
                    u += m[i] * m[j] / r
                else:
                    u = INFINITY
        U[k] = u
    return U_arr, dmin_arr


def path_potential_gradients(double[:, :, ::1] xs, double[::1] m):
    cdef Py_ssize_t K = xs.shape[0]
    cdef Py_ssize_t n = xs.shape[1]
    cdef Py_ssize_t d = xs.shape[2]
    cdef Py_ssize_t k, i, j, c
    cdef double r2, r, inv_r3, u, w, diff
    U_arr = np.zeros(K)
    grad_arr = np.zeros((K, n, d))
    dmin_arr = np.full(K, np.inf)
    cdef double[::1] U = U_arr
    cdef double[:, :, ::1] grad = grad_arr
    cdef double[::1] dmin = dmin_arr
    if n < 2:
        return U_arr, grad_arr, dmin_arr
    for k in range(K):
        u = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    diff = xs[k, j, c] - xs[k, i, c]
                    r2 += diff * diff
                r = sqrt(r2)
                if r < dmin[k]:
                    dmin[k] = r
                if r > 0.0:
                    u += m[i] * m[j] / r
                    inv_r3 = 1.0 / (r2 * r)
                    for c in range(d):
                        diff = xs[k, j, c] - xs[k, i, c]
                        w = inv_r3 * diff
                        # mass-metric gradient: row i gets m_j w, row j gets -m_i w
                        grad[k, i, c] += m[j] * w
                        grad[k, j, c] -= m[i] * w
                else:
                    u = INFINITY
        U[k] = u
    return U_arr, grad_arr, dmin_arr
