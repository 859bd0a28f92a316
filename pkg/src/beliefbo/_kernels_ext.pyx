# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for random-feature sample paths.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature and semantics; ``beliefbo._backend`` picks one at import time.
Loops over features are kept flat and contiguous so the compiler can
vectorize the trigonometric calls.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, exp, log, sqrt, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline void _phases(const double *x, const double *psiT, const double[::1] b,
                         Py_ssize_t d, Py_ssize_t m, double *s) noexcept nogil:
    cdef Py_ssize_t j, t
    cdef double xt
    for j in range(m):
        s[j] = b[j]
    for t in range(d):
        xt = x[t]
        for j in range(m):
            s[j] = s[j] + xt * psiT[t * m + j]


cdef double *_transpose(const double[:, ::1] psi) noexcept nogil:
    cdef Py_ssize_t m = psi.shape[0], d = psi.shape[1], j, t
    cdef double *out = <double *> malloc(m * d * sizeof(double))
    for j in range(m):
        for t in range(d):
            out[t * m + j] = psi[j, t]
    return out


def cos_features(const double[:, ::1] X, const double[:, ::1] psi,
                 const double[::1] b, double scale):
    cdef Py_ssize_t k = X.shape[0], d = X.shape[1], m = psi.shape[0]
    cdef Py_ssize_t i, j
    out = np.empty((k, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double *psiT = _transpose(psi)
    cdef double *s = <double *> malloc(m * sizeof(double))
    try:
        with nogil:
            for i in range(k):
                _phases(&X[i, 0], psiT, b, d, m, s)
                for j in range(m):
                    o[i, j] = scale * cos(s[j])
    finally:
        free(psiT)
        free(s)
    return out


def paired_value_grad(const double[:, ::1] P, const cnp.int64_t[::1] idx,
                      const double[:, ::1] W, const double[:, ::1] psi,
                      const double[::1] b, double scale):
    """Evaluate draw ``idx[p]`` (random-feature part only) at point ``P[p]``."""
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1], m = psi.shape[0]
    cdef Py_ssize_t p, j, t
    cdef double acc, ga
    cdef const double *w
    vals = np.zeros(n, dtype=np.float64)
    grads = np.zeros((n, d), dtype=np.float64)
    cdef double[::1] v = vals
    cdef double[:, ::1] g = grads
    cdef double *psiT = _transpose(psi)
    cdef double *s = <double *> malloc(m * sizeof(double))
    cdef double *c = <double *> malloc(m * sizeof(double))
    cdef double *sn = <double *> malloc(m * sizeof(double))
    try:
        with nogil:
            for p in range(n):
                _phases(&P[p, 0], psiT, b, d, m, s)
                w = &W[idx[p], 0]
                # separate loops keep gcc from fusing these into scalar sincos
                for j in range(m):
                    c[j] = cos(s[j])
                for j in range(m):
                    sn[j] = sin(s[j])
                acc = 0.0
                for j in range(m):
                    acc = acc + w[j] * c[j]
                    sn[j] = w[j] * sn[j]
                v[p] = scale * acc
                for t in range(d):
                    ga = 0.0
                    for j in range(m):
                        ga = ga + sn[j] * psiT[t * m + j]
                    g[p, t] = -scale * ga
    finally:
        free(psiT)
        free(s)
        free(c)
        free(sn)
    return vals, grads


def mixture_logpdf(const double[:, ::1] Y, const double[:, ::1] C,
                   const double[:, ::1] logw, double sigma):
    """Row-wise log of sum_j exp(logw[b, j]) * N(Y[b, i]; C[b, j], sigma^2)."""
    cdef Py_ssize_t B = Y.shape[0], N = Y.shape[1], M = C.shape[1]
    cdef Py_ssize_t r, i, j
    cdef double inv2s2 = 0.5 / (sigma * sigma)
    cdef double lognorm = -log(sigma) - 0.5 * log(2.0 * M_PI)
    cdef double y, z, mx, acc
    out = np.empty((B, N), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double *buf = <double *> malloc(M * sizeof(double))
    try:
        with nogil:
            for r in range(B):
                for i in range(N):
                    y = Y[r, i]
                    mx = -1e300
                    for j in range(M):
                        z = logw[r, j] - (y - C[r, j]) * (y - C[r, j]) * inv2s2
                        buf[j] = z
                        if z > mx:
                            mx = z
                    acc = 0.0
                    for j in range(M):
                        z = buf[j] - mx
                        # terms below exp(-40) cannot move the sum
                        acc = acc + (exp(z) if z > -40.0 else 0.0)
                    o[r, i] = mx + log(acc) + lognorm
    finally:
        free(buf)
    return out
