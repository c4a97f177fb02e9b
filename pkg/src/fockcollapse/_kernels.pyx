# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef Py_ssize_t _lookup(const long long[:] sorted_codes, long long code) nogil:
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = sorted_codes.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if sorted_codes[mid] < code:
            lo = mid + 1
        else:
            hi = mid
    if lo < sorted_codes.shape[0] and sorted_codes[lo] == code:
        return lo
    return -1


def ladder_matrix(const long long[:, :] occ, const long long[:] codes,
                  const long long[:] sorted_codes, const long long[:] order,
                  const long long[:] weights, const long long[:] caps,
                  const signed char[:] fermion, long long n_max,
                  Py_ssize_t mode, bint dagger):
    cdef Py_ssize_t dim = occ.shape[0]
    cdef Py_ssize_t n_modes = occ.shape[1]
    cdef Py_ssize_t i, j, pos
    cdef long long n, total, before, new_code
    cdef double val
    rows = np.empty(dim, dtype=np.int64)
    cols = np.empty(dim, dtype=np.int64)
    vals = np.empty(dim, dtype=np.float64)
    cdef long long[:] r = rows
    cdef long long[:] c = cols
    cdef double[:] v = vals
    cdef Py_ssize_t nnz = 0
    cdef bint lost = False
    with nogil:
        for i in range(dim):
            n = occ[i, mode]
            total = 0
            before = 0
            for j in range(n_modes):
                total += occ[i, j]
                if j < mode and fermion[j]:
                    before += occ[i, j]
            if dagger:
                if n + 1 > caps[mode] or total + 1 > n_max:
                    if not (fermion[mode] and n == 1):
                        lost = True
                    continue
                new_code = codes[i] + weights[mode]
                val = sqrt(<double>(n + 1))
            else:
                if n == 0:
                    continue
                new_code = codes[i] - weights[mode]
                val = sqrt(<double>n)
            if fermion[mode]:
                val = -1.0 if (before & 1) else 1.0
            pos = _lookup(sorted_codes, new_code)
            r[nnz] = order[pos]
            c[nnz] = i
            v[nnz] = val
            nnz += 1
    return rows[:nnz], cols[:nnz], vals[:nnz], lost


def draw_categorical(const double[:] cdf, const double[:] u):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k = cdf.shape[0]
    cdef Py_ssize_t i, lo, hi, mid
    out = np.empty(n, dtype=np.int64)
    cdef long long[:] o = out
    with nogil:
        for i in range(n):
            lo = 0
            hi = k - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[mid] > u[i]:
                    hi = mid
                else:
                    lo = mid + 1
            o[i] = lo
    return out
