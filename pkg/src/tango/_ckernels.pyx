# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Each routine fills rows ``[start, stop)`` of a
preallocated output so the caller can split work across threads.

Every accumulation runs sequentially in float64 in the same order as the
numpy fallback in ``_pykernels``; the two backends agree bit for bit.
"""
from libc.math cimport exp, sqrt, INFINITY
from libc.stdlib cimport malloc, free


def sqdist_rows(const double[:, ::1] x, double[:, ::1] out, Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t i, j, c
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef double acc, diff
    with nogil:
        for i in range(start, stop):
            for j in range(n):
                acc = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    acc = acc + diff * diff
                out[i, j] = acc


def knn_density_rows(const double[:, ::1] dist, Py_ssize_t k, double[::1] out,
                     Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t i, j, m, filled, pos
    cdef double dij, acc
    cdef double *buf
    if k <= 0:
        for i in range(start, stop):
            out[i] = 1.0
        return
    buf = <double *> malloc(k * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(start, stop):
                filled = 0
                for j in range(n):
                    if j == i:
                        continue
                    dij = dist[i, j]
                    if filled == k and not dij < buf[k - 1]:
                        continue
                    # insert after every entry <= dij; equal distances keep index order
                    pos = filled if filled < k else k - 1
                    while pos > 0 and buf[pos - 1] > dij:
                        if pos < k:
                            buf[pos] = buf[pos - 1]
                        pos -= 1
                    buf[pos] = dij
                    if filled < k:
                        filled += 1
                acc = 0.0
                for m in range(filled):
                    acc = acc + buf[m] * buf[m]
                out[i] = exp(-(acc / k))
    finally:
        free(buf)


def delta_rows(const double[:, ::1] dist, const double[::1] rho, double[::1] out,
               Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t i, j
    cdef double best, mx, dij
    cdef bint found
    with nogil:
        for i in range(start, stop):
            best = INFINITY
            mx = 0.0
            found = False
            for j in range(n):
                if j == i:
                    continue
                dij = dist[i, j]
                if dij > mx:
                    mx = dij
                if rho[j] > rho[i] or (rho[j] == rho[i] and j < i):
                    found = True
                    if dij < best:
                        best = dij
            out[i] = best if found else mx


def assign_rows(const double[:, ::1] dist, const long long[::1] centers, long long[::1] out,
                Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t kc = centers.shape[0]
    cdef Py_ssize_t i, c, best_c
    cdef double best, dij
    with nogil:
        for i in range(start, stop):
            best = INFINITY
            best_c = 0
            for c in range(kc):
                dij = dist[i, centers[c]]
                if dij < best:
                    best = dij
                    best_c = c
            out[i] = best_c


def adjacent_cosine_rows(const double[:, :, ::1] frames, double[:, ::1] out,
                         Py_ssize_t start, Py_ssize_t stop):
    """Cosine between token ``k`` of frame ``t`` and frame ``t + 1`` for t in [start, stop)."""
    cdef Py_ssize_t n = frames.shape[1], d = frames.shape[2]
    cdef Py_ssize_t t, k, c
    cdef double dot, na, nb, a, b
    with nogil:
        for t in range(start, stop):
            for k in range(n):
                dot = 0.0
                na = 0.0
                nb = 0.0
                for c in range(d):
                    a = frames[t, k, c]
                    b = frames[t + 1, k, c]
                    dot = dot + a * b
                    na = na + a * a
                    nb = nb + b * b
                if na == 0.0 or nb == 0.0:
                    out[t, k] = 0.0
                else:
                    out[t, k] = dot / (sqrt(na) * sqrt(nb))
