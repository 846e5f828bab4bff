"""Incremental HalfSpace-Trees anomaly scorer for unknown intrusions.

An ensemble of random perfect binary trees profiles where streaming data
concentrates: every node counts the instances of the current window falling
into its half-space cell (its *mass*).  Two windows are kept per node - the
reference mass ``r`` that scoring reads, and the latest mass ``l`` being
accumulated; when the window of size ``window_size`` completes, ``l`` is
promoted to ``r``.  High scores mean high mass, i.e. normal-looking points;
anomalies land in empty cells and score near zero.

Trees are stored as flat arrays (node ``i`` has children ``2i+1``/``2i+2``)
so path updates and scoring vectorize across the whole forest.
"""

from __future__ import annotations

from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass

import numpy as np


class ColdStartError(RuntimeError):
    """Not enough recent scores accumulated to threshold against."""


class WindowNotFullError(RuntimeError):
    pass


@dataclass(frozen=True)
class HsNode:
    """Read-only view of one tree node (leaves carry no split)."""

    depth: int
    split_dim: int | None
    split_value: float | None
    r: float
    l: float


class HsForest:
    """t perfect binary trees of depth h over [0, 1]^dims inputs.

    Each tree draws a random workspace: per dimension a split anchor
    s ~ U(0, 1) widens to the range [s - 2m, s + 2m] with m = max(s, 1-s),
    so the unit cube sits well inside it.  Internal nodes split a uniformly
    random dimension at the midpoint of the node's current range, halving the
    range for the children.
    """

    def __init__(self, dims: int, n_trees: int = 25, depth: int = 15,
                 window_size: int = 250, seed: int = 0):
        if dims < 1:
            raise ValueError("dims must be >= 1")
        if depth < 1 or n_trees < 1 or window_size < 1:
            raise ValueError("n_trees, depth and window_size must be positive")
        self.dims = dims
        self.n_trees = n_trees
        self.depth = depth
        self.window_size = window_size
        self.seed = seed
        self.count = 0
        self.n_internal = (1 << depth) - 1
        self.n_nodes = (1 << (depth + 1)) - 1
        self._build(np.random.default_rng(seed))
        self.r = np.zeros((n_trees, self.n_nodes))
        self.l = np.zeros((n_trees, self.n_nodes))
        self._score_scale = float(2 ** depth)
        self._tree_offsets = np.arange(n_trees) * self.n_nodes

    def _build(self, rng):
        t, d = self.n_trees, self.dims
        anchors = rng.random((t, d))
        m = np.maximum(anchors, 1.0 - anchors)
        lo0 = anchors - 2.0 * m
        hi0 = anchors + 2.0 * m
        # breadth-first node order: level k holds nodes [2^k - 1, 2^(k+1) - 1)
        split_dim = np.empty((t, self.n_internal), dtype=np.int32)
        node = 0
        for lvl in range(self.depth):
            width = 1 << lvl
            split_dim[:, node:node + width] = rng.integers(0, d, size=(t, width))
            node += width
        # midpoints one dimension at a time: a node's range in dimension q only
        # depends on the ancestors that split q, so 2-d level arrays suffice
        split_val = np.empty((t, self.n_internal), dtype=np.float64)
        for q in range(d):
            lo = lo0[:, q:q + 1].copy()
            hi = hi0[:, q:q + 1].copy()
            node = 0
            for lvl in range(self.depth):
                width = 1 << lvl
                mask = split_dim[:, node:node + width] == q
                mid = (lo + hi) * 0.5
                np.copyto(split_val[:, node:node + width], mid, where=mask)
                next_lo = np.repeat(lo, 2, axis=1)
                next_hi = np.repeat(hi, 2, axis=1)
                np.copyto(next_hi[:, 0::2], mid, where=mask)
                np.copyto(next_lo[:, 1::2], mid, where=mask)
                lo, hi = next_lo, next_hi
                node += width
        self.split_dim = split_dim
        self.split_val = split_val

    # -- traversal ---------------------------------------------------------

    def _path(self, x: np.ndarray) -> np.ndarray:
        """Root-to-leaf node index per tree, shape (depth + 1, n_trees)."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.zeros(self.n_trees, dtype=np.int64)
        path = np.empty((self.depth + 1, self.n_trees), dtype=np.int64)
        rows = np.arange(self.n_trees)
        for lvl in range(self.depth):
            path[lvl] = idx
            dims = self.split_dim[rows, idx]
            go_right = x[dims] >= self.split_val[rows, idx]
            idx = 2 * idx + 1 + go_right
        path[self.depth] = idx
        return path

    def score(self, x) -> float:
        """Anomaly score: sum over trees of leaf reference mass * 2^depth.

        Read-only; higher score = more reference mass = more normal.
        """
        leaves = self._path(x)[self.depth]
        return float(self.r[np.arange(self.n_trees), leaves].sum() * self._score_scale)

    def update_mass(self, x):
        """Record ``x`` in the latest window; rolls the window when it fills."""
        path = self._path(x)
        flat = (path + self._tree_offsets[None, :]).ravel()
        self.l.ravel()[flat] += 1.0
        self.count += 1
        if self.count == self.window_size:
            self.roll_window()

    def score_and_update(self, x) -> float:
        """score() followed by update_mass() sharing one tree traversal."""
        path = self._path(x)
        leaves = path[self.depth]
        score = float(self.r[np.arange(self.n_trees), leaves].sum() * self._score_scale)
        flat = (path + self._tree_offsets[None, :]).ravel()
        self.l.ravel()[flat] += 1.0
        self.count += 1
        if self.count == self.window_size:
            self.roll_window()
        return score

    def roll_window(self):
        """Promote latest masses to reference masses and start a new window."""
        if self.count != self.window_size:
            raise WindowNotFullError(
                f"window holds {self.count} of {self.window_size} instances")
        np.copyto(self.r, self.l)
        self.l.fill(0.0)
        self.count = 0

    # -- inspection --------------------------------------------------------

    def node(self, tree: int, index: int) -> HsNode:
        depth = int(np.floor(np.log2(index + 1)))
        if index < self.n_internal:
            return HsNode(depth, int(self.split_dim[tree, index]),
                          float(self.split_val[tree, index]),
                          float(self.r[tree, index]), float(self.l[tree, index]))
        return HsNode(depth, None, None,
                      float(self.r[tree, index]), float(self.l[tree, index]))

    def leaf_reference_mass(self, tree: int) -> np.ndarray:
        return self.r[tree, self.n_internal:]

    def leaf_latest_mass(self, tree: int) -> np.ndarray:
        return self.l[tree, self.n_internal:]


class ScoreReservoir:
    """Rolling reservoir of recent anomaly scores for quantile thresholding.

    Keeps the scores sorted incrementally so the quantile is exact and O(1)
    to read (np.quantile semantics, linear interpolation).
    """

    def __init__(self, capacity: int = 500, min_scores: int = 50):
        self.capacity = capacity
        self.min_scores = min_scores
        self._ring: deque = deque()
        self._sorted: list[float] = []

    def add(self, score: float):
        score = float(score)
        if len(self._ring) == self.capacity:
            old = self._ring.popleft()
            del self._sorted[bisect_left(self._sorted, old)]
        self._ring.append(score)
        insort(self._sorted, score)

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def ready(self) -> bool:
        return len(self._ring) >= self.min_scores

    def quantile(self, q: float) -> float:
        if not self.ready:
            raise ColdStartError(
                f"only {len(self._ring)} of {self.min_scores} scores accumulated")
        s = self._sorted
        pos = q * (len(s) - 1)
        i = int(pos)
        frac = pos - i
        if frac == 0.0 or i + 1 == len(s):
            return s[i]
        return s[i] + frac * (s[i + 1] - s[i])


def is_anomalous(score: float, recent: ScoreReservoir, q: float = 0.10) -> bool:
    """True when ``score`` falls below the q-quantile of recent scores.

    Raises ColdStartError until the reservoir holds its minimum sample;
    callers that need a verdict during cold start should treat it as
    non-anomalous.
    """
    return score < recent.quantile(q)
