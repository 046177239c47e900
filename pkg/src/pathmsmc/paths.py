"""Choosing low-variance paths through previously visited parameters.

For exponential-family models the variance of the log path estimate is
``sum_i (theta_{i+1} - theta_i)^T V_i (theta_{i+1} - theta_i)`` with V_i the
covariance of S(x) under f(.|theta_i). Paths are scored with a single
population estimate V-hat in place of every V_i.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .kdtree import BoundingBox
from .model import InvalidInputError


def estimate_v(population_stats):
    """Unbiased sample covariance of the statistics, symmetrised."""
    s = np.asarray(population_stats, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if len(s) < 2:
        raise InvalidInputError("need at least two statistics vectors")
    v = np.atleast_2d(np.cov(s, rowvar=False, ddof=1))
    return 0.5 * (v + v.T)


def score_path(thetas, v):
    """Sum of V-weighted squared hop lengths along the path."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    if len(thetas) < 2:
        raise InvalidInputError("path needs at least two points")
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape != (thetas.shape[1], thetas.shape[1]):
        raise InvalidInputError("V-hat dimension does not match theta")
    steps = np.diff(thetas, axis=0)
    return float(np.einsum("ij,jk,ik->", steps, v, steps))


def distance_to_segment(points, a, b):
    """Euclidean distance from each row of ``points`` to the closed segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


@dataclass
class PathChoice:
    thetas: np.ndarray  # (l + 1, d): particle, interior points, anchor
    stats: np.ndarray  # (l, d): statistics at every point but the anchor
    score: float
    direct_score: float
    n_candidates: int

    @property
    def n_hops(self):
        return len(self.thetas) - 1


def order_candidates(cand, start, end):
    """Visiting order and ordering-list ranks for the candidate points.

    Returns ``(visit, lrank)``: ``visit`` sorts candidates by distance to the
    start-end segment; ``lrank[q]`` is candidate q's position in the list
    obtained by adding its rank by increasing distance to ``start`` and its
    rank by decreasing distance to ``end``. All sorts are stable.
    """
    q = len(cand)
    visit = np.argsort(distance_to_segment(cand, start, end), kind="stable")
    r1 = np.empty(q, dtype=np.int64)
    r1[np.argsort(np.linalg.norm(cand - start, axis=1), kind="stable")] = np.arange(q)
    r2 = np.empty(q, dtype=np.int64)
    r2[np.argsort(-np.linalg.norm(cand - end, axis=1), kind="stable")] = np.arange(q)
    lrank = np.empty(q, dtype=np.int64)
    lrank[np.argsort(r1 + r2, kind="stable")] = np.arange(q)
    return visit, lrank


def build_path(index, start, start_stats, end, v, min_tag=None):
    """Greedy low-score path from ``start`` (a particle) to ``end`` (the anchor).

    1. range-search the history inside the minimum bounding box of the ends;
    2. order candidates by distance to the segment between the ends;
    3. rank them by the combined endpoint-distance list;
    4. starting from the direct path, try each candidate in step-2 order at
       the position its step-3 rank dictates among accepted points, keeping
       it only if the score strictly drops.
    """
    start = np.atleast_1d(np.asarray(start, dtype=float))
    end = np.atleast_1d(np.asarray(end, dtype=float))
    start_stats = np.atleast_1d(np.asarray(start_stats, dtype=float))
    v = np.ascontiguousarray(np.atleast_2d(np.asarray(v, dtype=float)))
    direct = score_path(np.stack([start, end]), v)

    cand_idx = index.range_search(BoundingBox.around(start, end), min_tag=min_tag)
    cand = index.thetas[cand_idx]
    keep = ~(np.all(cand == start, axis=1) | np.all(cand == end, axis=1))
    cand_idx, cand = cand_idx[keep], cand[keep]
    if len(cand_idx) == 0:
        return PathChoice(np.stack([start, end]), start_stats[None, :], direct, direct, 0)

    visit, lrank = order_candidates(cand, start, end)
    ordered = cand[visit]
    points = np.ascontiguousarray(np.vstack([start, end, ordered]))
    accepted, score = _backend.grow_path(points, np.ascontiguousarray(lrank[visit]), v)
    chosen = cand_idx[visit][accepted]
    thetas = np.vstack([start, index.thetas[chosen], end])
    stats = np.vstack([start_stats, index.stats[chosen]])
    return PathChoice(thetas, stats, float(score), direct, len(cand_idx))
