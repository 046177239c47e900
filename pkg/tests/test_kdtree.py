import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathmsmc.kdtree import BoundingBox, HistoryIndex
from pathmsmc.model import InvalidInputError


def random_box(rng, d):
    a, b = rng.uniform(-0.1, 1.1, size=(2, d))
    return BoundingBox.around(a, b)


def test_box_validation():
    with pytest.raises(InvalidInputError):
        BoundingBox([1.0], [0.0])
    with pytest.raises(InvalidInputError):
        BoundingBox([0.0, 0.0], [1.0])
    box = BoundingBox.around([1.0, 0.0], [0.0, 2.0])
    assert np.array_equal(box.lo, [0, 0]) and np.array_equal(box.hi, [1, 2])


def test_empty_index():
    idx = HistoryIndex(2)
    assert len(idx.range_search(BoundingBox([-1, -1], [1, 1]))) == 0
    idx.rebalance()
    assert idx.root is None and idx.depth() == 0


def test_insert_then_degenerate_box():
    idx = HistoryIndex(2)
    k = idx.insert([0.3, 0.7], [1.0, 2.0], 1)
    assert list(idx.range_search(BoundingBox([0.3, 0.7], [0.3, 0.7]))) == [k]
    assert np.array_equal(idx.stats[k], [1.0, 2.0])


def test_insert_dimension_checked():
    idx = HistoryIndex(2)
    with pytest.raises(InvalidInputError):
        idx.insert([0.1], [1.0], 0)
    with pytest.raises(InvalidInputError):
        idx.range_search(BoundingBox([0.0], [1.0]))


def test_store_grows_by_p():
    idx = HistoryIndex(1)
    rng = np.random.default_rng(0)
    for t in range(5):
        before = len(idx)
        idx.insert_many(rng.random((40, 1)), rng.random((40, 1)), t)
        assert len(idx) == before + 40


def test_dedupe_drops_exact_copies():
    idx = HistoryIndex(1)
    assert idx.insert([0.5], [1.0], 1) == 0
    assert idx.insert([0.5], [3.0], 2) is None
    assert len(idx) == 1
    keep = HistoryIndex(1, dedupe=False)
    keep.insert([0.5], [1.0], 1)
    keep.insert([0.5], [3.0], 2)
    assert len(keep.range_search(BoundingBox([0.5], [0.5]))) == 2


def test_whole_space_box_returns_everything():
    idx = HistoryIndex(2)
    rng = np.random.default_rng(1)
    idx.insert_many(rng.random((500, 2)), rng.random((500, 2)), 0)
    got = idx.range_search(BoundingBox([-np.inf, -np.inf], [np.inf, np.inf]))
    assert np.array_equal(got, np.arange(500))


def test_range_search_matches_linear_scan_10k():
    rng = np.random.default_rng(2)
    idx = HistoryIndex(2)
    pts = rng.random((10_000, 2))
    for p in pts:
        idx.insert(p, p, 0)
    for _ in range(100):
        box = random_box(rng, 2)
        assert np.array_equal(idx.range_search(box), idx.linear_scan(box))


def test_min_tag_filter():
    idx = HistoryIndex(1)
    for t in range(1, 6):
        idx.insert([t / 10], [0.0], t)
    got = idx.range_search(BoundingBox([0.0], [1.0]), min_tag=3)
    assert list(idx.tags[got]) == [3, 4, 5]


def test_rebalance_keeps_results_and_depth_bound():
    rng = np.random.default_rng(3)
    idx = HistoryIndex(2, leaf_size=1)
    idx.insert_many(rng.random((777, 2)), np.zeros((777, 2)), 0)
    boxes = [random_box(rng, 2) for _ in range(50)]
    before = [idx.range_search(b) for b in boxes]
    idx.rebalance()
    assert idx.inserted_since_rebuild == 0
    for b, r in zip(boxes, before):
        assert np.array_equal(idx.range_search(b), r)
    assert idx.depth() <= math.ceil(math.log2(len(idx))) + 1


def test_automatic_rebuilds_happen():
    idx = HistoryIndex(1)
    idx.insert_many(np.arange(1000.0)[:, None], np.zeros((1000, 1)), 0)
    assert idx.n_rebuilds >= 5
    assert idx.inserted_since_rebuild <= len(idx)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=0, max_size=300),
       st.lists(st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5), st.floats(-2.5, 2.5), st.floats(-2.5, 2.5)),
                min_size=1, max_size=10),
       st.integers(1, 6))
def test_range_search_property(points, boxes, leaf):
    idx = HistoryIndex(2, leaf_size=leaf, dedupe=False)
    for k, p in enumerate(points):
        idx.insert(p, p, k)
    for a, b, c, d in boxes:
        box = BoundingBox.around([a, b], [c, d])
        assert np.array_equal(idx.range_search(box), idx.linear_scan(box))


def test_duplicate_heavy_workload():
    # many identical coordinates on one axis exercise the no-split paths
    idx = HistoryIndex(2, leaf_size=2, dedupe=False)
    for k in range(200):
        idx.insert([0.5, float(k % 3)], [0.0, 0.0], k)
    box = BoundingBox([0.5, 1.0], [0.5, 1.0])
    assert np.array_equal(idx.range_search(box), idx.linear_scan(box))
