# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch Babai kernels; same contract as ``_fallback``.

Trials are processed in blocks with the trial index innermost, so the
per-level updates are independent across trials and vectorize.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, fabs, copysign, fmin
from libc.stdlib cimport malloc, free

cnp.import_array()

MODE_REGULARIZED = 0
MODE_ORDINARY = 1

cdef enum:
    BLOCK = 256


cdef void _babai_block(const double* R, const double* Y, Py_ssize_t n, Py_ssize_t nb,
                       double lam, double top, int mode, double* xb, double* s) noexcept nogil:
    """Detect ``nb`` consecutive rows of ``Y``; ``xb[k * BLOCK + t]`` holds level k of row t."""
    cdef Py_ssize_t k, j, t
    cdef double rkj, rkk, r2, c, a, z, g
    cdef double* xk
    cdef const double* xj
    for k in range(n - 1, -1, -1):
        for t in range(nb):
            s[t] = Y[t * n + k]
        for j in range(k + 1, n):
            rkj = R[k * n + j]
            xj = xb + j * BLOCK
            for t in range(nb):
                s[t] -= xj[t] * rkj
        rkk = R[k * n + k]
        r2 = rkk * rkk
        xk = xb + k * BLOCK
        for t in range(nb):
            c = s[t] / rkk
            a = fabs(c)
            if mode == 1:
                xk[t] = 0.0 if a == 0.0 else copysign(ceil(a - 0.5), c)
                continue
            if a <= 0.5:
                z = 0.0
            else:
                z = copysign(fmin(2.0 * ceil(a / 2.0) - 1.0, top), c)
            g = 0.5 * r2 * z * z - r2 * z * c + lam
            xk[t] = 0.0 if g >= 0.0 else z


cdef int _run(const double* R, const double* Y, Py_ssize_t T, Py_ssize_t n, double lam, int M,
              int mode, double* X, const long long* truth, long long* hits) noexcept nogil:
    """Write detections to ``X`` if given, count exact matches against ``truth`` if given."""
    cdef double* xb = <double*>malloc(n * BLOCK * sizeof(double))
    cdef double* s = <double*>malloc(BLOCK * sizeof(double))
    if xb == NULL or s == NULL:
        free(xb)
        free(s)
        return -1
    cdef double top = 2 * M - 1
    cdef Py_ssize_t t0, nb, t, k
    cdef bint ok
    t0 = 0
    while t0 < T:
        nb = min(<Py_ssize_t>BLOCK, T - t0)
        _babai_block(R, Y + t0 * n, n, nb, lam, top, mode, xb, s)
        if X != NULL:
            for t in range(nb):
                for k in range(n):
                    X[(t0 + t) * n + k] = xb[k * BLOCK + t]
        if truth != NULL:
            for t in range(nb):
                ok = True
                for k in range(n):
                    if xb[k * BLOCK + t] != <double>truth[(t0 + t) * n + k]:
                        ok = False
                        break
                if ok:
                    hits[0] += 1
        t0 += nb
    free(xb)
    free(s)
    return 0


def babai_batch(R, Y, double lam, int M, int mode=MODE_REGULARIZED):
    cdef double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t T = Yv.shape[0], n = Yv.shape[1]
    out = np.zeros((T, n), dtype=np.float64)
    if T == 0 or n == 0:
        return out.astype(np.int64)
    cdef double[:, ::1] Xv = out
    cdef int rc
    with nogil:
        rc = _run(&Rv[0, 0], &Yv[0, 0], T, n, lam, M, mode, &Xv[0, 0], NULL, NULL)
    if rc:
        raise MemoryError()
    return out.astype(np.int64)


def count_successes(R, Y, X_true, double lam, int M):
    cdef double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef long long[:, ::1] Tv = np.ascontiguousarray(X_true, dtype=np.int64)
    cdef Py_ssize_t T = Yv.shape[0], n = Yv.shape[1]
    if T == 0 or n == 0:
        return int(T)
    cdef long long hits = 0
    cdef int rc
    with nogil:
        rc = _run(&Rv[0, 0], &Yv[0, 0], T, n, lam, M, 0, NULL, &Tv[0, 0], &hits)
    if rc:
        raise MemoryError()
    return int(hits)

