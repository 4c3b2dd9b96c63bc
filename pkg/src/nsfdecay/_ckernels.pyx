# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batched 3x3 matrix exponentials and mode-wise propagation.

Mirrors :mod:`nsfdecay._pykernels` exactly; both are exercised by the test-suite.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, frexp, ldexp

cnp.import_array()

# [6/6] Pade coefficients; valid once the scaled 1-norm is <= 1/2
cdef double PADE[7]
PADE[:] = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0,
           1.0 / 15840.0, 1.0 / 665280.0]


cdef inline void _matmul3(double* a, double* b, double* out) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += a[3 * i + k] * b[3 * k + j]
            out[3 * i + j] = acc


cdef inline void _solve3(double* q, double* p, double* out) noexcept nogil:
    # Gaussian elimination with partial pivoting: out = q^{-1} p
    cdef double m[3][6]
    cdef int i, j, k, piv
    cdef double big, f, tmp
    for i in range(3):
        for j in range(3):
            m[i][j] = q[3 * i + j]
            m[i][3 + j] = p[3 * i + j]
    for k in range(3):
        piv = k
        big = fabs(m[k][k])
        for i in range(k + 1, 3):
            if fabs(m[i][k]) > big:
                big = fabs(m[i][k])
                piv = i
        if piv != k:
            for j in range(6):
                tmp = m[k][j]
                m[k][j] = m[piv][j]
                m[piv][j] = tmp
        for i in range(k + 1, 3):
            f = m[i][k] / m[k][k]
            for j in range(k, 6):
                m[i][j] -= f * m[k][j]
    for j in range(3):
        for i in range(2, -1, -1):
            tmp = m[i][3 + j]
            for k in range(i + 1, 3):
                tmp -= m[i][k] * out[3 * k + j]
            out[3 * i + j] = tmp / m[i][i]


cdef void _expm3(double* a, double* out) noexcept nogil:
    cdef double x[9]
    cdef double x2[9]
    cdef double x4[9]
    cdef double x6[9]
    cdef double u[9]
    cdef double v[9]
    cdef double tmp[9]
    cdef double p[9]
    cdef double q[9]
    cdef double norm = 0.0, col
    cdef int i, j, s = 0, e
    for j in range(3):
        col = fabs(a[j]) + fabs(a[3 + j]) + fabs(a[6 + j])
        if col > norm:
            norm = col
    if norm > 0.5:
        frexp(norm / 0.5, &e)
        s = e
    for i in range(9):
        x[i] = ldexp(a[i], -s)
    _matmul3(x, x, x2)
    _matmul3(x2, x2, x4)
    _matmul3(x4, x2, x6)
    # even part v, odd part u = x * (c1 I + c3 x2 + c5 x4)
    for i in range(9):
        v[i] = PADE[2] * x2[i] + PADE[4] * x4[i] + PADE[6] * x6[i]
        tmp[i] = PADE[3] * x2[i] + PADE[5] * x4[i]
    for i in range(3):
        v[4 * i] += PADE[0]
        tmp[4 * i] += PADE[1]
    _matmul3(x, tmp, u)
    for i in range(9):
        p[i] = v[i] + u[i]
        q[i] = v[i] - u[i]
    _solve3(q, p, out)
    for i in range(s):
        _matmul3(out, out, tmp)
        for j in range(9):
            out[j] = tmp[j]


def expm3(double[:, :, ::1] a):
    """Exponentials of a stack of 3x3 real matrices, shape (N, 3, 3)."""
    cdef Py_ssize_t n = a.shape[0], m
    out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for m in range(n):
            _expm3(&a[m, 0, 0], &o[m, 0, 0])
    return out


def propagate(double complex[:, ::1] u, double[:, ::1] xhat,
              cnp.intp_t[::1] index, double[:, :, ::1] mats, double[::1] heat):
    """In-place linear propagation of a stacked state ``(a, v_1..v_d, theta)``.

    ``u`` has shape (d+2, M) over flattened modes, ``xhat`` (d, M) holds unit
    directions (zero where the direction is undefined), ``index`` maps each mode
    to its row of ``mats`` / ``heat``.
    """
    cdef Py_ssize_t d = xhat.shape[0], nm = u.shape[1], m, c
    cdef Py_ssize_t k
    cdef double complex a, om, th, lon, na, nom, nth
    cdef double h
    cdef double* g
    with nogil:
        for m in range(nm):
            k = index[m]
            g = &mats[k, 0, 0]
            h = heat[k]
            a = u[0, m]
            th = u[d + 1, m]
            lon = 0.0
            for c in range(d):
                lon = lon + xhat[c, m] * u[1 + c, m]
            om = 1j * lon
            na = g[0] * a + g[1] * om + g[2] * th
            nom = g[3] * a + g[4] * om + g[5] * th
            nth = g[6] * a + g[7] * om + g[8] * th
            u[0, m] = na
            u[d + 1, m] = nth
            for c in range(d):
                u[1 + c, m] = h * (u[1 + c, m] - xhat[c, m] * lon) - 1j * xhat[c, m] * nom
