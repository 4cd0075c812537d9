"""Random forests of PCTs in global (all targets) and local (one target) mode."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .pct import PctTree, _as_matrix, _as_targets, grow, kernel_seed

GLOBAL = "global"
LOCAL = "local"

# first word of every per-tree seed sequence, so streams never collide
_STREAM_FOREST = 0
_STREAM_BOOST = 1


def tree_stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for one ensemble member, keyed by its indices."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def run_jobs(fn, jobs, n_jobs: int = 1) -> list:
    """Map ``fn`` over ``jobs`` in order, optionally on a thread pool.

    The compiled kernels release the GIL, so threads give real parallelism;
    results never depend on the worker count.
    """
    jobs = list(jobs)
    if n_jobs is None or n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
        return list(pool.map(fn, jobs))


@dataclass(eq=False)
class ForestModel:
    trees: list[PctTree]
    mode: str
    target_index: int | None
    n_features: int
    n_sub: int
    m_leaf: int
    seed: int
    bootstrap: bool = True
    train_seconds: float = field(default=0.0, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        return predict_forest(self, X, n_trees)

    def params(self) -> dict:
        return {"mode": self.mode, "target_index": self.target_index,
                "n_features": self.n_features, "f": self.n_sub, "m_leaf": self.m_leaf,
                "seed": self.seed, "bootstrap": self.bootstrap, "n_trees": self.n_trees}


def _check_columns(n_features: int, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != n_features:
        raise ValueError(f"model expects {n_features} feature columns, got {X.shape[1]}")
    return X


def _forest_jobs(X, targets, n_trees, n_sub, m_leaf, seed, bootstrap):
    """``targets`` pairs a contiguous target matrix with its stream key."""
    n = X.shape[0]
    pool = np.arange(X.shape[1], dtype=np.int64)

    def build(job):
        Yt, key, m = job
        rng = tree_stream(seed, _STREAM_FOREST, key, m)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return grow(X, Yt, rows, pool, n_sub, m_leaf, -1, kernel_seed(rng))

    jobs = [(Yt, key, m) for Yt, key in targets for m in range(n_trees)]
    return build, jobs


def _validate(X, Y, n_trees, f, m_leaf):
    X, Y = _as_matrix(X), _as_targets(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y have different numbers of rows")
    if X.shape[0] == 0:
        raise ValueError("cannot train on zero rows")
    p = X.shape[1]
    f = p if f is None else int(f)
    if not 1 <= f <= p:
        raise ValueError(f"feature subset size must be in [1, {p}], got {f}")
    if n_trees < 1:
        raise ValueError(f"need at least one tree, got {n_trees}")
    if m_leaf < 1:
        raise ValueError(f"m_leaf must be >= 1, got {m_leaf}")
    return X, Y, f


def train_random_forest(X, Y, n_trees: int = 200, f: int | None = None, m_leaf: int = 1,
                        mode: str = GLOBAL, target_index: int | None = None,
                        seed: int = 0, bootstrap: bool = True, n_jobs: int = 1) -> ForestModel:
    """Forest of PCTs on bootstrap samples.

    ``mode="global"`` predicts every column of ``Y`` jointly; ``"local"``
    fits column ``target_index`` alone.  Tree ``m`` draws its bootstrap
    sample and feature subsets from a stream keyed by ``(seed, target, m)``,
    so any prefix of the forest is the forest that would be trained with
    fewer trees.
    """
    X, Y, f = _validate(X, Y, n_trees, f, m_leaf)
    if mode == GLOBAL:
        if target_index is not None:
            raise ValueError("global forests take no target index")
        targets = [(Y, 0)]
    elif mode == LOCAL:
        if target_index is None or not 0 <= int(target_index) < Y.shape[1]:
            raise ValueError(f"invalid target index {target_index} for {Y.shape[1]} targets")
        target_index = int(target_index)
        targets = [(np.ascontiguousarray(Y[:, [target_index]]), target_index + 1)]
    else:
        raise ValueError(f"unknown forest mode {mode!r}")
    start = time.perf_counter()
    build, jobs = _forest_jobs(X, targets, n_trees, f, m_leaf, seed, bootstrap)
    trees = run_jobs(build, jobs, n_jobs)
    elapsed = time.perf_counter() - start
    return ForestModel(trees, mode, target_index, X.shape[1], f, m_leaf, int(seed),
                       bootstrap, elapsed)


def train_local_forests(X, Y, n_trees: int = 200, f: int | None = None, m_leaf: int = 1,
                        seed: int = 0, bootstrap: bool = True, targets=None,
                        n_jobs: int = 1) -> list[ForestModel]:
    """One local forest per target column, all trees scheduled together."""
    X, Y, f = _validate(X, Y, n_trees, f, m_leaf)
    targets = list(range(Y.shape[1])) if targets is None else [int(t) for t in targets]
    per_target = [(np.ascontiguousarray(Y[:, [t]]), t + 1) for t in targets]
    start = time.perf_counter()
    build, jobs = _forest_jobs(X, per_target, n_trees, f, m_leaf, seed, bootstrap)
    trees = run_jobs(build, jobs, n_jobs)
    elapsed = time.perf_counter() - start
    share = elapsed / max(len(targets), 1)
    return [ForestModel(trees[i * n_trees:(i + 1) * n_trees], LOCAL, t, X.shape[1], f,
                        m_leaf, int(seed), bootstrap, share)
            for i, t in enumerate(targets)]


def predict_forest(model, X, n_trees: int | None = None) -> np.ndarray:
    """Average of the first ``n_trees`` tree predictions.

    A list of local forests yields one column per forest.
    """
    if isinstance(model, (list, tuple)):
        return np.column_stack([predict_forest(m, X, n_trees)[:, 0] for m in model])
    X = _check_columns(model.n_features, X)
    trees = model.trees if n_trees is None else model.trees[:n_trees]
    if not trees:
        raise ValueError("cannot predict with zero trees")
    total = np.zeros((X.shape[0], trees[0].n_targets))
    for tree in trees:
        total += tree.predict(X)
    return total / len(trees)
