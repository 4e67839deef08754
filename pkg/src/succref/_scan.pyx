# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled build of the typicality scan kernel."""
import numpy as np
cimport numpy as cnp
from libc.string cimport memset

cnp.import_array()


def scan_typical(const cnp.int64_t[::1] ctx, const cnp.uint8_t[:, ::1] book, Py_ssize_t card,
                 const cnp.int64_t[::1] lo, const cnp.int64_t[::1] hi, Py_ssize_t max_hits):
    cdef Py_ssize_t m = book.shape[0], n = book.shape[1], ncell = lo.shape[0]
    cdef Py_ssize_t r, i, c, nhit = 0
    cdef bint ok
    cdef cnp.int64_t[::1] counts = np.zeros(ncell, dtype=np.int64)
    cdef cnp.int64_t[::1] base = np.empty(n, dtype=np.int64)
    out = np.empty(max(max_hits, 0), dtype=np.int64)
    cdef cnp.int64_t[::1] hits = out
    for i in range(n):
        base[i] = ctx[i] * card
    with nogil:
        for r in range(m):
            if nhit >= max_hits:
                break
            memset(&counts[0], 0, ncell * sizeof(cnp.int64_t))
            ok = True
            for i in range(n):
                c = base[i] + book[r, i]
                counts[c] += 1
                if counts[c] > hi[c]:
                    ok = False
                    break
            if ok:
                for c in range(ncell):
                    if counts[c] < lo[c]:
                        ok = False
                        break
            if ok:
                hits[nhit] = r
                nhit += 1
    return out[:nhit]
