# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: raster-scan Gibbs sweeps and greedy path growth.

Both functions mirror ``_pykernels`` operation for operation so the two
backends return bit-identical results for the same inputs.
"""
import numpy as np

from libc.string cimport memmove


def gibbs_sweeps(signed char[:, ::1] spins, const double[:, ::1] table,
                 const double[::1] uniforms, Py_ssize_t n_sweeps,
                 bint second_order):
    cdef Py_ssize_t h = spins.shape[0]
    cdef Py_ssize_t w = spins.shape[1]
    cdef Py_ssize_t s, i, j, k = 0
    cdef int n1, n2
    if uniforms.shape[0] < n_sweeps * h * w:
        raise ValueError("not enough uniforms for the requested sweeps")
    for s in range(n_sweeps):
        for i in range(h):
            for j in range(w):
                n1 = 0
                if i > 0:
                    n1 += spins[i - 1, j]
                if i < h - 1:
                    n1 += spins[i + 1, j]
                if j > 0:
                    n1 += spins[i, j - 1]
                if j < w - 1:
                    n1 += spins[i, j + 1]
                n2 = 0
                if second_order:
                    if i > 0 and j > 0:
                        n2 += spins[i - 1, j - 1]
                    if i > 0 and j < w - 1:
                        n2 += spins[i - 1, j + 1]
                    if i < h - 1 and j > 0:
                        n2 += spins[i + 1, j - 1]
                    if i < h - 1 and j < w - 1:
                        n2 += spins[i + 1, j + 1]
                # branchless: the comparison is unpredictable
                spins[i, j] = <signed char>(2 * (uniforms[k] < table[n1 + 4, n2 + 4]) - 1)
                k += 1


cdef inline double _quad(const double[:, ::1] cand, Py_ssize_t a,
                         Py_ssize_t b, const double[:, ::1] V,
                         double* diff) noexcept nogil:
    # rows a, b index into cand; quadratic form (b - a)^T V (b - a)
    cdef Py_ssize_t d = cand.shape[1]
    cdef Py_ssize_t r, c
    cdef double acc = 0.0, row
    for r in range(d):
        diff[r] = cand[b, r] - cand[a, r]
    for r in range(d):
        row = 0.0
        for c in range(d):
            row = row + V[r, c] * diff[c]
        acc = acc + diff[r] * row
    return acc


def grow_path(const double[:, ::1] points, const long long[::1] lrank,
              const double[:, ::1] V):
    """Greedy insertion over candidates.

    ``points`` holds start (row 0), end (row 1) and the Q candidates
    (rows 2..Q+1) in visiting order; ``lrank`` gives each candidate's
    position in the ordering list.
    """
    cdef Py_ssize_t q_total = points.shape[0] - 2
    cdef Py_ssize_t d = points.shape[1]
    cdef long long[::1] acc_rank = np.empty(max(q_total, 1), dtype=np.int64)
    cdef long long[::1] acc_row = np.empty(max(q_total, 1), dtype=np.int64)
    cdef double[::1] diff = np.empty(max(d, 1), dtype=np.float64)
    cdef Py_ssize_t n = 0, q, lo, hi, mid, prev, nxt
    cdef long long r
    cdef double D, D_star
    D = _quad(points, 0, 1, V, &diff[0])
    for q in range(q_total):
        r = lrank[q]
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) // 2
            if acc_rank[mid] < r:
                lo = mid + 1
            else:
                hi = mid
        prev = 0 if lo == 0 else acc_row[lo - 1]
        nxt = 1 if lo == n else acc_row[lo]
        D_star = (D - _quad(points, prev, nxt, V, &diff[0])
                  + _quad(points, prev, q + 2, V, &diff[0])
                  + _quad(points, q + 2, nxt, V, &diff[0]))
        if D_star < D:
            if lo < n:
                memmove(&acc_rank[lo + 1], &acc_rank[lo], (n - lo) * sizeof(long long))
                memmove(&acc_row[lo + 1], &acc_row[lo], (n - lo) * sizeof(long long))
            acc_rank[lo] = r
            acc_row[lo] = q + 2
            n += 1
            D = D_star
    out = np.asarray(acc_row[:n]).copy() - 2
    return out, D
