"""Predictive clustering trees for (multi-target) regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class SplitTest:
    feature_index: int
    threshold: float

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x)[..., self.feature_index] < self.threshold


@dataclass(frozen=True, eq=False)
class PctTree:
    """Flat binary tree; leaves carry prototype vectors (per-target means).

    ``gain`` and ``count`` keep the variance reduction and node size of every
    internal node for importance scoring.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    count: np.ndarray
    gain: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_targets(self) -> int:
        return int(self.value.shape[1])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = _as_matrix(X)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left,
                                   self.right, self.missing_left)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) if f >= 0 else None
                          for f, t in zip(self.feature, self.threshold)],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "missing_left": self.missing_left.astype(int).tolist(),
            "count": self.count.tolist(),
            "gain": self.gain.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PctTree:
        thr = np.array([np.nan if t is None else t for t in d["threshold"]], dtype=np.float64)
        value = np.array(d["value"], dtype=np.float64)
        return cls(np.array(d["feature"], dtype=np.int64), thr,
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["missing_left"], dtype=bool), np.array(d["count"], dtype=np.int64),
                   np.array(d["gain"], dtype=np.float64),
                   value.reshape(len(d["feature"]), -1))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    return np.ascontiguousarray(X)


def _as_targets(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    return np.ascontiguousarray(Y)


def variance_heuristic(Y, rows=None) -> float:
    """Average over target columns of the population variance on ``rows``."""
    Y = _as_targets(Y)
    rows = np.arange(Y.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("variance of an empty example set")
    return float(_kernels.node_variance(Y, rows)[0])


def find_best_test(X, Y, rows=None, features=None, m_leaf: int = 1):
    """Best variance-reducing test on ``rows`` among ``features``.

    Returns ``(test, h, (left_rows, right_rows))``, or ``(None, 0.0, None)``
    when no admissible test reduces the variance.
    """
    X, Y = _as_matrix(X), _as_targets(Y)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    features = (np.arange(X.shape[1]) if features is None
                else np.sort(np.asarray(features, dtype=np.int64)))
    if features.size == 0:
        raise ValueError("need at least one candidate feature")
    f, thr, h = _kernels.best_split(X, Y, rows, features, int(m_leaf))
    if f < 0:
        return None, 0.0, None
    test = SplitTest(int(f), float(thr))
    goes_left = test(X[rows])
    return test, float(h), (rows[goes_left], rows[~goes_left])


def grow(X, Y, rows, pool, n_sub, m_leaf, max_depth, seed) -> PctTree:
    """Thin wrapper over the compiled grower taking prepared arrays."""
    arrays = _kernels.grow_tree(X, Y, np.asarray(rows, dtype=np.int64),
                                np.asarray(pool, dtype=np.int64), int(n_sub),
                                int(m_leaf), int(max_depth), int(seed))
    return PctTree(*arrays)


def induce_pct(X, Y, f: int | None = None, m_leaf: int = 1, rng=None,
               rows=None, max_depth: int = -1) -> PctTree:
    """Induce one PCT on ``rows`` (default: all rows, no resampling).

    ``f`` features are drawn at every node; ``rng`` is a seed or a numpy
    Generator and fixes the sequence of draws.
    """
    X, Y = _as_matrix(X), _as_targets(Y)
    n, p = X.shape
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot induce a tree from zero examples")
    if Y.shape[0] != n:
        raise ValueError("X and Y have different numbers of rows")
    f = p if f is None else int(f)
    if not 1 <= f <= p:
        raise ValueError(f"feature subset size must be in [1, {p}], got {f}")
    if m_leaf < 1:
        raise ValueError(f"m_leaf must be >= 1, got {m_leaf}")
    return grow(X, Y, rows, np.arange(p), f, m_leaf, max_depth, kernel_seed(rng))


def kernel_seed(rng) -> int:
    """32-bit seed for the compiled generator from an int or a Generator."""
    if rng is None:
        rng = 0
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    return int(rng.integers(0, 2**32 - 1))
