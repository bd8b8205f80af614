# cython: language_level=3
"""Compiled hot kernels. Semantics mirror ``_pykernels`` bit for bit.

Summation is correctly rounded (Shewchuk partials, same final rounding
step as CPython's ``math.fsum``), so results do not depend on the order
of the inputs nor on which backend produced them.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, isfinite
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()


cdef struct Acc:
    double* p
    Py_ssize_t n
    Py_ssize_t cap
    double special
    bint has_special


cdef int acc_init(Acc* a) except -1:
    a.cap = 32
    a.n = 0
    a.special = 0.0
    a.has_special = False
    a.p = <double*> malloc(a.cap * sizeof(double))
    if a.p == NULL:
        raise MemoryError()
    return 0


cdef inline int acc_add(Acc* a, double x) except -1:
    cdef Py_ssize_t i = 0, j
    cdef double y, hi, yr, lo, t
    cdef double xsave = x
    for j in range(a.n):
        y = a.p[j]
        if fabs(x) < fabs(y):
            t = x
            x = y
            y = t
        hi = x + y
        yr = hi - x
        lo = y - yr
        if lo != 0.0:
            a.p[i] = lo
            i += 1
        x = hi
    a.n = i
    if x != 0.0:
        if not isfinite(x):
            # inf/nan: fall back to naive accumulation of the raw inputs
            a.special += xsave
            a.has_special = True
            a.n = 0
        else:
            if a.n >= a.cap:
                a.cap *= 2
                a.p = <double*> realloc(a.p, a.cap * sizeof(double))
                if a.p == NULL:
                    raise MemoryError()
            a.p[a.n] = x
            a.n += 1
    return 0


cdef inline double acc_result(Acc* a):
    cdef double hi = 0.0, lo = 0.0, x, y, yr
    cdef Py_ssize_t n = a.n
    if a.has_special:
        return a.special
    if n > 0:
        n -= 1
        hi = a.p[n]
        while n > 0:
            x = hi
            n -= 1
            y = a.p[n]
            hi = x + y
            yr = hi - x
            lo = y - yr
            if lo != 0.0:
                break
        if n > 0 and ((lo < 0.0 and a.p[n - 1] < 0.0) or (lo > 0.0 and a.p[n - 1] > 0.0)):
            y = lo * 2.0
            x = hi + y
            yr = x - hi
            if y == yr:
                hi = x
    return hi


def exact_sum(const double[::1] a):
    cdef Acc acc
    cdef Py_ssize_t i
    acc_init(&acc)
    try:
        for i in range(a.shape[0]):
            acc_add(&acc, a[i])
        return acc_result(&acc)
    finally:
        free(acc.p)


def exact_sum_sq_ratio(const double[::1] f, const double[::1] q):
    """Correctly rounded sum of ``f*f/q`` (each term rounded first)."""
    cdef Acc acc
    cdef Py_ssize_t i
    cdef double term
    if f.shape[0] != q.shape[0]:
        raise ValueError("length mismatch")
    acc_init(&acc)
    try:
        for i in range(f.shape[0]):
            term = f[i] * f[i]
            term = term / q[i]
            acc_add(&acc, term)
        return acc_result(&acc)
    finally:
        free(acc.p)


def row_stats(const double[::1] t, const cnp.int64_t[:, ::1] idx):
    """Per row of ``idx``: mean and n-1 sample std of ``t[idx[r]]``."""
    cdef Py_ssize_t r, j, m = idx.shape[1], rows = idx.shape[0]
    cdef Acc acc
    cdef double mean, d
    means = np.empty(rows, dtype=np.float64)
    stds = np.zeros(rows, dtype=np.float64)
    cdef double[::1] mv = means
    cdef double[::1] sv = stds
    if m == 0:
        raise ValueError("empty rows")
    acc_init(&acc)
    try:
        for r in range(rows):
            acc.n = 0
            acc.has_special = False
            acc.special = 0.0
            for j in range(m):
                acc_add(&acc, t[idx[r, j]])
            mean = acc_result(&acc) / <double> m
            mv[r] = mean
            if m > 1:
                acc.n = 0
                acc.has_special = False
                acc.special = 0.0
                for j in range(m):
                    d = t[idx[r, j]] - mean
                    d = d * d
                    acc_add(&acc, d)
                sv[r] = sqrt(acc_result(&acc) / <double> (m - 1))
    finally:
        free(acc.p)
    return means, stds


def inverse_cdf(const double[::1] cdf, const double[::1] targets):
    """Smallest i with ``cdf[i] > target``, clipped to the last index."""
    cdef Py_ssize_t k, n = cdf.shape[0], lo, hi, mid
    cdef double v
    out = np.empty(targets.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    if n == 0:
        raise ValueError("empty cdf")
    for k in range(targets.shape[0]):
        v = targets[k]
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if cdf[mid] <= v:
                lo = mid + 1
            else:
                hi = mid
        if lo >= n:
            lo = n - 1
        ov[k] = lo
    return out
