# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels for the area-integrand algebra.

Same contracts as ``_kernels_np``; the accumulation order is identical so the
two backends agree bitwise (the extension is built with -ffp-contract=off).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def area_batch(double[:, :, ::1] Z):
    cdef Py_ssize_t m = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t s, i
    cdef double n1, n2, p
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    for s in range(m):
        n1 = 0.0
        n2 = 0.0
        p = 0.0
        for i in range(n):
            n1 += Z[s, i, 0] * Z[s, i, 0]
            n2 += Z[s, i, 1] * Z[s, i, 1]
            p += Z[s, i, 0] * Z[s, i, 1]
        out[s] = sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)
    return out_arr


def inner_stress_batch(double[:, :, ::1] Z):
    cdef Py_ssize_t m = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t s, i
    cdef double n1, n2, p, a
    out_arr = np.empty((m, 2, 2))
    cdef double[:, :, ::1] out = out_arr
    for s in range(m):
        n1 = 0.0
        n2 = 0.0
        p = 0.0
        for i in range(n):
            n1 += Z[s, i, 0] * Z[s, i, 0]
            n2 += Z[s, i, 1] * Z[s, i, 1]
            p += Z[s, i, 0] * Z[s, i, 1]
        a = sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)
        out[s, 0, 0] = (1.0 + n2) / a
        out[s, 0, 1] = -p / a
        out[s, 1, 0] = -p / a
        out[s, 1, 1] = (1.0 + n1) / a
    return out_arr


def area_gradient_batch(double[:, :, ::1] Z):
    cdef Py_ssize_t m = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t s, i
    cdef double n1, n2, p, a
    out_arr = np.empty((m, n, 2))
    cdef double[:, :, ::1] out = out_arr
    for s in range(m):
        n1 = 0.0
        n2 = 0.0
        p = 0.0
        for i in range(n):
            n1 += Z[s, i, 0] * Z[s, i, 0]
            n2 += Z[s, i, 1] * Z[s, i, 1]
            p += Z[s, i, 0] * Z[s, i, 1]
        a = sqrt(1.0 + n1 + n2 + n1 * n2 - p * p)
        for i in range(n):
            out[s, i, 0] = (Z[s, i, 0] * (1.0 + n2) - Z[s, i, 1] * p) / a
            out[s, i, 1] = (Z[s, i, 1] * (1.0 + n1) - Z[s, i, 0] * p) / a
    return out_arr


def minor_max_batch(double[:, :, ::1] Z):
    cdef Py_ssize_t m = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t s, a, b
    cdef double best, d
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    for s in range(m):
        best = 0.0
        for a in range(n):
            for b in range(a + 1, n):
                d = fabs(Z[s, a, 0] * Z[s, b, 1] - Z[s, a, 1] * Z[s, b, 0])
                if d > best:
                    best = d
        out[s] = best
    return out_arr
