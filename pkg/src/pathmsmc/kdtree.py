"""Append-only store of visited parameters with a bucketed KD-tree for range search.

Points are inserted incrementally by descending to a leaf; leaves split at
the median when they overflow. A full median-split rebuild runs once the
number of inserts since the last rebuild exceeds the tree size at that
rebuild, which keeps the amortised insertion cost logarithmic.
"""
import numpy as np

from .model import InvalidInputError


class BoundingBox:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise InvalidInputError("box corners differ in dimension")
        if np.any(lo > hi):
            raise InvalidInputError("box needs lo <= hi componentwise")
        self.lo, self.hi = lo, hi

    @classmethod
    def around(cls, a, b):
        """Minimum bounding box of two points."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return cls(np.minimum(a, b), np.maximum(a, b))

    def __repr__(self):
        return f"BoundingBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class _Node:
    __slots__ = ("axis", "split", "left", "right", "idx", "blo", "bhi")

    def __init__(self, lo, hi):
        self.axis = -1
        self.split = 0.0
        self.left = self.right = None
        self.idx = []  # store indices, leaves only
        # bounding box of contents, as tuples
        self.blo, self.bhi = tuple(lo.tolist()), tuple(hi.tolist())

    @property
    def is_leaf(self):
        return self.left is None


class HistoryIndex:
    """Visited (theta, S(x), iteration) triples indexed by theta.

    Parameters
    ----------
    dim : int
        Dimension of theta (and of the statistics).
    leaf_size : int
        Maximum points per leaf before it splits.
    dedupe : bool
        Drop points whose theta coincides exactly with a stored one.
    """

    def __init__(self, dim, leaf_size=8, dedupe=True):
        if dim < 1 or leaf_size < 1:
            raise InvalidInputError("dim and leaf_size must be positive")
        self.dim = int(dim)
        self.leaf_size = int(leaf_size)
        self.dedupe = dedupe
        self._theta = np.empty((64, self.dim))
        self._stats = np.empty((64, self.dim))
        self._tag = np.empty(64, dtype=np.int64)
        self._n = 0
        self._pts = []  # theta rows as tuples, for the tree walk
        self._seen = set()
        self.root = None
        self.inserted_since_rebuild = 0
        self._size_at_rebuild = 0
        self.n_rebuilds = 0

    def __len__(self):
        return self._n

    @property
    def thetas(self):
        return self._theta[: self._n]

    @property
    def stats(self):
        return self._stats[: self._n]

    @property
    def tags(self):
        return self._tag[: self._n]

    def _grow(self):
        cap = 2 * len(self._theta)
        for name in ("_theta", "_stats", "_tag"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def insert(self, theta, stats, t):
        """Add one point; returns its store index, or None if deduplicated."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        stats = np.atleast_1d(np.asarray(stats, dtype=float))
        if theta.shape != (self.dim,) or stats.shape != (self.dim,):
            raise InvalidInputError(f"expected dimension {self.dim}")
        if self.dedupe:
            key = theta.tobytes()
            if key in self._seen:
                return None
            self._seen.add(key)
        if self._n == len(self._theta):
            self._grow()
        k = self._n
        self._theta[k] = theta
        self._stats[k] = stats
        self._tag[k] = t
        self._pts.append(tuple(theta.tolist()))
        self._n += 1
        self.inserted_since_rebuild += 1
        if self.root is None or self.inserted_since_rebuild > self._size_at_rebuild:
            self.rebalance()
        else:
            self._insert_into_tree(k)
        return k

    def insert_many(self, thetas, stats, t):
        return [self.insert(th, s, t) for th, s in zip(np.atleast_2d(thetas), np.atleast_2d(stats))]

    def _insert_into_tree(self, k):
        p = self._pts[k]
        node = self.root
        while True:
            node.blo = tuple(map(min, node.blo, p))
            node.bhi = tuple(map(max, node.bhi, p))
            if node.is_leaf:
                break
            node = node.left if p[node.axis] <= node.split else node.right
        node.idx.append(k)
        if len(node.idx) > self.leaf_size:
            self._split(node)

    def _split(self, node):
        idx = np.asarray(node.idx)
        pts = self._theta[idx]
        spread = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0.0:
            return  # all coincide; leave an oversized leaf
        order = np.argsort(pts[:, axis], kind="stable")
        mid = len(idx) // 2
        split = pts[order[mid - 1], axis]
        left_mask = pts[:, axis] <= split
        if left_mask.all():
            return
        node.axis, node.split = axis, float(split)
        node.left = self._make_leaf(idx[left_mask])
        node.right = self._make_leaf(idx[~left_mask])
        node.idx = []

    def _make_leaf(self, idx):
        pts = self._theta[idx]
        leaf = _Node(pts.min(axis=0), pts.max(axis=0))
        leaf.idx = idx.tolist()
        return leaf

    def _build(self, idx, depth):
        pts = self._theta[idx]
        node = _Node(pts.min(axis=0), pts.max(axis=0))
        spread = pts.max(axis=0) - pts.min(axis=0)
        if len(idx) <= self.leaf_size:
            node.idx = idx.tolist()
            return node
        axis = int(np.argmax(spread))
        if spread[axis] == 0.0:
            node.idx = idx.tolist()
            return node
        order = np.argsort(pts[:, axis], kind="stable")
        mid = len(idx) // 2
        split = pts[order[mid - 1], axis]
        left_mask = pts[:, axis] <= split
        if left_mask.all():
            node.idx = idx.tolist()
            return node
        node.axis, node.split = axis, float(split)
        node.left = self._build(idx[left_mask], depth + 1)
        node.right = self._build(idx[~left_mask], depth + 1)
        return node

    def rebalance(self):
        """Rebuild the tree from the store by median splits."""
        self.inserted_since_rebuild = 0
        self._size_at_rebuild = self._n
        if self._n == 0:
            self.root = None
            return
        self.root = self._build(np.arange(self._n), 0)
        self.n_rebuilds += 1

    def depth(self):
        def _d(node):
            if node is None:
                return 0
            if node.is_leaf:
                return 1
            return 1 + max(_d(node.left), _d(node.right))

        return _d(self.root)

    def range_search(self, box, min_tag=None):
        """Store indices of points with lo <= theta <= hi (inclusive), ascending.

        ``min_tag`` keeps only points inserted with iteration tag >= min_tag.
        """
        if box.lo.shape != (self.dim,):
            raise InvalidInputError(f"box must have dimension {self.dim}")
        if self.root is None:
            return np.empty(0, dtype=np.int64)
        # node boxes are tiny; plain tuple comparisons beat numpy calls here
        lo, hi = tuple(box.lo.tolist()), tuple(box.hi.tolist())
        dims = range(self.dim)
        pts = self._pts
        found = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            nlo, nhi = node.blo, node.bhi
            if any(nhi[k] < lo[k] or nlo[k] > hi[k] for k in dims):
                continue
            if all(nlo[k] >= lo[k] and nhi[k] <= hi[k] for k in dims):
                self._collect(node, found)
                continue
            if node.left is None:
                for i in node.idx:
                    pt = pts[i]
                    if all(lo[k] <= pt[k] <= hi[k] for k in dims):
                        found.append(i)
                continue
            stack.append(node.right)
            stack.append(node.left)
        out = np.array(found, dtype=np.int64)
        out.sort()
        if min_tag is not None:
            out = out[self._tag[out] >= min_tag]
        return out

    def _collect(self, node, found):
        stack = [node]
        while stack:
            nd = stack.pop()
            if nd.left is None:
                found.extend(nd.idx)
            else:
                stack.append(nd.left)
                stack.append(nd.right)

    def linear_scan(self, box, min_tag=None):
        """Reference range search by brute force."""
        pts = self.thetas
        mask = np.all((pts >= box.lo) & (pts <= box.hi), axis=1)
        if min_tag is not None:
            mask &= self.tags >= min_tag
        return np.flatnonzero(mask)
