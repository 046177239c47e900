import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathmsmc import _pykernels
from pathmsmc.kdtree import HistoryIndex
from pathmsmc.model import InvalidInputError
from pathmsmc.paths import build_path, distance_to_segment, estimate_v, order_candidates, score_path


def index_of(points, stats=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = HistoryIndex(points.shape[1])
    stats = np.zeros_like(points) if stats is None else stats
    for k, (p, s) in enumerate(zip(points, stats)):
        idx.insert(p, s, 1)
    return idx


def test_estimate_v_examples():
    assert np.array_equal(estimate_v(np.ones((5, 2))), np.zeros((2, 2)))
    assert estimate_v([[0.0], [2.0]])[0, 0] == 2.0
    with pytest.raises(InvalidInputError):
        estimate_v([[1.0]])


def test_estimate_v_matches_two_pass():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(50, 2)) * [3, 1]
    mu = s.mean(axis=0)
    ref = sum(np.outer(r - mu, r - mu) for r in s) / (len(s) - 1)
    v = estimate_v(s)
    assert np.allclose(v, ref, atol=1e-10, rtol=0)
    assert np.array_equal(v, v.T)
    assert np.linalg.eigvalsh(v).min() >= -1e-10


def test_score_path_examples():
    v = np.array([[2.0]])
    assert score_path([[0.0], [3.0]], v) == 18.0
    for l in (1, 2, 4, 8):
        assert score_path(np.linspace(0, 1.5, l + 1)[:, None], [[1.0]]) == pytest.approx(1.5**2 / l, rel=1e-12)
    assert score_path([[0.0], [1.0], [2.0]], [[1.0]]) == 2.0
    with pytest.raises(InvalidInputError):
        score_path([[0.0]], [[1.0]])
    with pytest.raises(InvalidInputError):
        score_path([[0.0, 1.0], [1.0, 1.0]], [[1.0]])


def test_score_identity_v_is_squared_lengths():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(6, 2))
    assert score_path(p, np.eye(2)) == pytest.approx(np.sum(np.diff(p, axis=0) ** 2), rel=1e-12)


def test_distance_to_closed_segment():
    a, b = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    pts = np.array([[0.5, 1.0], [2.0, 0.0], [-1.0, 1.0]])
    assert np.allclose(distance_to_segment(pts, a, b), [1.0, 1.0, np.sqrt(2)])
    assert np.allclose(distance_to_segment(pts, a, a), np.linalg.norm(pts, axis=1))


def test_no_candidates_gives_direct_path():
    idx = index_of([[5.0, 5.0]])
    ch = build_path(idx, [0.0, 0.0], [1.0, 2.0], [1.0, 1.0], np.eye(2))
    assert ch.n_hops == 1 and ch.n_candidates == 0
    assert ch.score == ch.direct_score == 2.0
    assert np.array_equal(ch.stats, [[1.0, 2.0]])


def test_endpoints_excluded_from_candidates():
    idx = index_of([[0.0], [1.0], [0.5]])
    ch = build_path(idx, [0.0], [3.0], [1.0], [[1.0]])
    assert ch.n_candidates == 1
    assert np.allclose(ch.thetas[:, 0], [0.0, 0.5, 1.0])


def test_one_dimension_takes_every_interior_point_in_order():
    rng = np.random.default_rng(2)
    interior = rng.uniform(0.1, 0.9, 30)
    stats = rng.normal(size=(30, 1))
    idx = index_of(interior[:, None], stats)
    ch = build_path(idx, [0.0], [0.0], [1.0], [[1.0]])
    assert np.allclose(ch.thetas[1:-1, 0], np.sort(interior))
    # statistics travel with their points
    order = np.argsort(interior)
    assert np.allclose(ch.stats[1:, 0], stats[order, 0])
    # same from the other side
    back = build_path(idx, [1.0], [0.0], [0.0], [[1.0]])
    assert np.allclose(back.thetas[1:-1, 0], np.sort(interior)[::-1])


def test_midpoint_in_far_point_out():
    idx = index_of([[0.5, 0.5], [3.0, -2.0]])
    ch = build_path(idx, [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], np.eye(2))
    assert ch.n_candidates == 1
    assert np.allclose(ch.thetas, [[0, 0], [0.5, 0.5], [1, 1]])
    assert ch.score == pytest.approx(ch.direct_score / 2)
    # exhaustive search over the path space of the two points agrees
    best = min(score_path(np.vstack([[0, 0], *sub, [1, 1]]), np.eye(2))
               for r in range(3) for sub in itertools.permutations([[0.5, 0.5], [3.0, -2.0]], r))
    assert ch.score == pytest.approx(best)


def test_order_candidates_ranks():
    cand = np.array([[0.9, 0.0], [0.1, 0.0], [0.5, 0.4]])
    visit, lrank = order_candidates(cand, np.zeros(2), np.array([1.0, 0.0]))
    assert list(visit) == [0, 1, 2]
    assert sorted(lrank) == [0, 1, 2]
    assert lrank[1] < lrank[0]  # nearer the start comes first


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 40), st.integers(1, 2))
def test_greedy_never_worse_than_direct(seed, n, d):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, d))
    idx = index_of(pts) if n else HistoryIndex(d)
    a = rng.normal(size=d)
    b = rng.normal(size=d)
    m = rng.normal(size=(d, d))
    v = m @ m.T + 0.1 * np.eye(d)
    ch = build_path(idx, a, np.zeros(d), b, v)
    assert ch.score <= ch.direct_score
    assert ch.score == pytest.approx(score_path(ch.thetas, v), rel=1e-9, abs=1e-12)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert np.all((ch.thetas >= lo) & (ch.thetas <= hi))


def test_greedy_scores_monotone():
    rng = np.random.default_rng(4)
    pts = np.vstack([np.zeros(2), np.ones(2), rng.random((25, 2))])
    lrank = rng.permutation(25)
    v = np.eye(2)
    accepted, final = _pykernels.grow_path(pts, lrank, v)
    # replay: every accepted insertion lowered D
    d_prev = score_path(pts[:2], v)
    chosen = []
    for q in range(25):
        if q in accepted:
            chosen.append(q)
            chosen.sort(key=lambda k: lrank[k])
            d_now = score_path(np.vstack([pts[0], pts[2 + np.array(chosen)], pts[1]]), v)
            assert d_now < d_prev + 1e-12
            d_prev = d_now
    assert final == pytest.approx(d_prev, rel=1e-9)
