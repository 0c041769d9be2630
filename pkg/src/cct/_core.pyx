# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: auxiliary BH sweep and the weighted U-statistic.

Mirrors the contracts of ``cct._numpy_core``; selected by ``cct._backend``
at import time.
"""
from libc.math cimport exp, sqrt, pi, tgamma
from libc.stdlib cimport malloc, free, qsort

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double da = (<const double*> a)[0]
    cdef double db = (<const double*> b)[0]
    if da < db:
        return -1
    elif da > db:
        return 1
    return 0


def aux_rhat_sizes(p, q, v2, double alpha):
    """BH rejection counts of the per-test-point auxiliary p-value vectors."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p_ = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_ = np.ascontiguousarray(v2, dtype=np.float64)
    cdef Py_ssize_t m = p_.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(m, dtype=np.int64)
    cdef double* buf = <double*> malloc(m * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t j, l, r
    cdef double vj
    try:
        with nogil:
            for j in range(m):
                vj = v_[j]
                for l in range(m):
                    buf[l] = p_[l] if v_[l] <= vj else q_[l]
                buf[j] = 0.0
                qsort(buf, m, sizeof(double), _cmp_double)
                # largest r with buf[r-1] <= alpha * r / m; the zero entry
                # guarantees r = 1 qualifies
                r = m
                while r >= 1:
                    if buf[r - 1] <= alpha * r / m:
                        break
                    r -= 1
                out[j] = r
    finally:
        free(buf)
    return out


def u_stat_terms(x1, x2, v1, v2, xi, double bandwidth, str family="gaussian"):
    """Numerator and variance estimate of the weighted two-sample U-statistic."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(x1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(x2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s1 = np.ascontiguousarray(v1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s2 = np.ascontiguousarray(v2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.ascontiguousarray(xi, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef bint gaussian = family == "gaussian"
    cdef double h2 = bandwidth * bandwidth
    cdef double norm, radius2
    if gaussian:
        norm = (2.0 * pi * h2) ** (-<double> d / 2.0)
        radius2 = 0.0
    else:
        norm = 1.0 / (pi ** (<double> d / 2.0) / tgamma(<double> d / 2.0 + 1.0)
                      * (sqrt(2.0) * bandwidth) ** d)
        radius2 = 2.0 * h2

    cdef cnp.ndarray[cnp.float64_t, ndim=1] cols = np.zeros(n, dtype=np.float64)
    cdef double total = 0.0, sumsq = 0.0, rowsq = 0.0, row_i
    cdef double sq, diff, w, dij
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(n):
            row_i = 0.0
            for j in range(n):
                sq = 0.0
                for k in range(d):
                    diff = a[i, k] - b[j, k]
                    sq += diff * diff
                if gaussian:
                    w = norm * exp(-sq / (2.0 * h2))
                else:
                    w = norm if sq <= radius2 else 0.0
                if s1[i] < s2[j]:
                    dij = -0.5
                elif s1[i] == s2[j]:
                    dij = 0.5 - u[j]
                else:
                    dij = 0.5
                w *= dij
                row_i += w
                cols[j] += w
                total += w
                sumsq += w * w
            rowsq += row_i * row_i
    cdef double colsq = 0.0
    for j in range(n):
        colsq += cols[j] * cols[j]
    cdef double nn = <double> n
    cdef double numerator = total / (nn * nn)
    cdef double sigma_sq = (rowsq / (nn * nn * nn * nn)
                            + colsq / (nn * nn * nn * nn)
                            - sumsq / (nn * nn * nn * nn)
                            - (2.0 / nn) * numerator * numerator)
    return numerator, sigma_sq
