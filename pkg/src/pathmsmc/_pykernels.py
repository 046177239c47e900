"""Pure-Python versions of the compiled kernels.

Used when the extension is not built or when ``PATHMSMC_PURE_PYTHON`` is
set. Arithmetic follows ``_ckernels.pyx`` step for step.
"""
from bisect import bisect_left

import numpy as np


def gibbs_sweeps(spins, table, uniforms, n_sweeps, second_order):
    h, w = spins.shape
    if len(uniforms) < n_sweeps * h * w:
        raise ValueError("not enough uniforms for the requested sweeps")
    grid = spins.tolist()
    tab = table.tolist()
    u = uniforms.tolist() if isinstance(uniforms, np.ndarray) else list(uniforms)
    k = 0
    for _ in range(n_sweeps):
        for i in range(h):
            row = grid[i]
            up = grid[i - 1] if i > 0 else None
            down = grid[i + 1] if i < h - 1 else None
            for j in range(w):
                n1 = 0
                if up is not None:
                    n1 += up[j]
                if down is not None:
                    n1 += down[j]
                if j > 0:
                    n1 += row[j - 1]
                if j < w - 1:
                    n1 += row[j + 1]
                n2 = 0
                if second_order:
                    if up is not None:
                        if j > 0:
                            n2 += up[j - 1]
                        if j < w - 1:
                            n2 += up[j + 1]
                    if down is not None:
                        if j > 0:
                            n2 += down[j - 1]
                        if j < w - 1:
                            n2 += down[j + 1]
                row[j] = 1 if u[k] < tab[n1 + 4][n2 + 4] else -1
                k += 1
    spins[...] = np.asarray(grid, dtype=np.int8)


def _quad(pts, a, b, V):
    d = len(pts[0])
    diff = [pts[b][r] - pts[a][r] for r in range(d)]
    acc = 0.0
    for r in range(d):
        row = 0.0
        for c in range(d):
            row = row + V[r][c] * diff[c]
        acc = acc + diff[r] * row
    return acc


def grow_path(points, lrank, V):
    pts = np.asarray(points, dtype=np.float64).tolist()
    ranks = [int(r) for r in lrank]
    Vl = np.asarray(V, dtype=np.float64).tolist()
    acc_rank = []
    acc_row = []
    D = _quad(pts, 0, 1, Vl)
    for q, r in enumerate(ranks):
        lo = bisect_left(acc_rank, r)
        prev = 0 if lo == 0 else acc_row[lo - 1]
        nxt = 1 if lo == len(acc_rank) else acc_row[lo]
        D_star = (D - _quad(pts, prev, nxt, Vl)
                  + _quad(pts, prev, q + 2, Vl)
                  + _quad(pts, q + 2, nxt, Vl))
        if D_star < D:
            acc_rank.insert(lo, r)
            acc_row.insert(lo, q + 2)
            D = D_star
    return np.asarray(acc_row, dtype=np.int64) - 2, D
