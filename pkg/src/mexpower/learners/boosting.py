"""Stochastic gradient boosted regression trees under squared loss."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import (
    GBT_COL_FRACTION,
    GBT_EARLY_STOP,
    GBT_LEARNING_RATE,
    GBT_MAX_DEPTH,
    GBT_ROUNDS,
    GBT_ROW_FRACTION,
    GBT_VALIDATION_FRACTION,
)
from .forest import _STREAM_BOOST, _check_columns, run_jobs, tree_stream
from .pct import PctTree, _as_matrix, grow, kernel_seed


@dataclass(eq=False)
class BoostedModel:
    """``init_constant + eta * sum(tree(x))`` over the first ``rounds_used`` trees.

    Trees beyond ``rounds_used`` (grown while waiting out the early-stopping
    patience) are kept so that any prefix can still be evaluated.
    """

    init_constant: float
    trees: list[PctTree]
    eta: float
    max_depth: int
    row_fraction: float
    col_fraction: float
    rounds_used: int
    seed: int
    n_features: int
    target_index: int | None = None
    validation_rmse: list[float] = field(default_factory=list)
    train_seconds: float = field(default=0.0, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X, rounds: int | None = None) -> np.ndarray:
        return predict_gbt(self, X, rounds)

    def params(self) -> dict:
        return {"eta": self.eta, "max_depth": self.max_depth,
                "row_fraction": self.row_fraction, "col_fraction": self.col_fraction,
                "rounds_used": self.rounds_used, "n_trees": self.n_trees,
                "seed": self.seed, "target_index": self.target_index}


def _staged(trees, X, init, eta):
    """Yield predictions after 0, 1, ... trees, accumulated the same way predict does."""
    out = np.full(X.shape[0], float(init))
    yield out
    for tree in trees:
        out = out + eta * tree.predict(X)[:, 0]
        yield out


def predict_gbt(model: BoostedModel, X, rounds: int | None = None) -> np.ndarray:
    X = _check_columns(model.n_features, X)
    rounds = model.rounds_used if rounds is None else int(rounds)
    if not 0 <= rounds <= model.n_trees:
        raise ValueError(f"model has {model.n_trees} trees, asked for {rounds}")
    out = None
    for out in _staged(model.trees[:rounds], X, model.init_constant, model.eta):
        pass
    return out


def _subsample(rng, n: int, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n, dtype=np.int64)
    k = max(1, int(round(fraction * n)))
    return np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)


def _rmse(a, b) -> float:
    return math.sqrt(float(np.mean((a - b) ** 2)))


def train_gbt(X, y, n_rounds: int = GBT_ROUNDS, eta: float = GBT_LEARNING_RATE,
              max_depth: int = GBT_MAX_DEPTH, row_fraction: float = GBT_ROW_FRACTION,
              col_fraction: float = GBT_COL_FRACTION,
              early_stop_rounds: int | None = GBT_EARLY_STOP,
              validation_fraction: float = GBT_VALIDATION_FRACTION,
              seed: int = 0, target_index: int | None = None) -> BoostedModel:
    """Boost depth-limited regression trees on squared-loss pseudo-residuals.

    Rows are assumed to be in time order.  With early stopping enabled the
    last ``validation_fraction`` of them is held out, and boosting stops once
    the held-out RMSE has not improved for ``early_stop_rounds`` rounds;
    ``rounds_used`` is then the best round.  Without early stopping all rows
    are used for fitting.

    ``y`` may be a matrix, in which case column ``target_index`` is boosted.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        if target_index is None:
            if y.shape[1] != 1:
                raise ValueError("pass target_index to boost one column of a target matrix")
            y = y[:, 0]
        else:
            y = y[:, int(target_index)]
    if y.shape[0] != X.shape[0] or X.shape[0] == 0:
        raise ValueError("X and y must have the same non-zero number of rows")
    if n_rounds < 0:
        raise ValueError(f"number of boosting rounds must be >= 0, got {n_rounds}")
    if not (0 < row_fraction <= 1 and 0 < col_fraction <= 1):
        raise ValueError("sampling fractions must lie in (0, 1]")
    if eta <= 0:
        raise ValueError(f"learning rate must be positive, got {eta}")

    n, p = X.shape
    stopping = bool(early_stop_rounds) and early_stop_rounds > 0
    n_val = int(round(validation_fraction * n)) if stopping else 0
    if stopping and not 1 <= n_val < n:
        raise ValueError(f"validation fraction {validation_fraction} leaves no rows on one side")
    n_fit = n - n_val
    X_fit = np.ascontiguousarray(X[:n_fit])
    y_fit = y[:n_fit]
    X_val, y_val = X[n_fit:], y[n_fit:]

    start = time.perf_counter()
    init = float(np.mean(y_fit))
    pred_fit = np.full(n_fit, init)
    pred_val = np.full(n_val, init)
    history: list[float] = []
    best_round = 0
    best_rmse = _rmse(y_val, pred_val) if stopping else math.inf
    if stopping:
        history.append(best_rmse)
    trees: list[PctTree] = []
    key = -1 if target_index is None else int(target_index)
    for m in range(1, n_rounds + 1):
        rng = tree_stream(seed, _STREAM_BOOST, key + 1, m)
        rows = _subsample(rng, n_fit, row_fraction)
        cols = _subsample(rng, p, col_fraction)
        residual = np.ascontiguousarray((y_fit - pred_fit)[:, None])
        tree = grow(X_fit, residual, rows, cols, cols.size, 1, max_depth, kernel_seed(rng))
        trees.append(tree)
        pred_fit = pred_fit + eta * tree.predict(X_fit)[:, 0]
        if stopping:
            pred_val = pred_val + eta * tree.predict(X_val)[:, 0]
            score = _rmse(y_val, pred_val)
            history.append(score)
            if score < best_rmse:
                best_rmse, best_round = score, m
            elif m - best_round >= early_stop_rounds:
                break
    rounds_used = best_round if stopping else len(trees)
    elapsed = time.perf_counter() - start
    return BoostedModel(init, trees, float(eta), int(max_depth), float(row_fraction),
                        float(col_fraction), rounds_used, int(seed), p, target_index,
                        history, elapsed)


def train_local_gbt(X, Y, n_jobs: int = 1, targets=None, **params) -> list[BoostedModel]:
    """Independent boosted model per target column; targets run in parallel."""
    X = _as_matrix(X)
    Y = np.asarray(Y, dtype=np.float64)
    targets = range(Y.shape[1]) if targets is None else targets
    return run_jobs(lambda t: train_gbt(X, Y, target_index=int(t), **params),
                    targets, n_jobs)


def staged_predict(model: BoostedModel, X, rounds) -> dict[int, np.ndarray]:
    """Predictions at several ensemble sizes in one pass over the trees."""
    X = _check_columns(model.n_features, X)
    wanted = sorted({int(r) for r in rounds})
    if wanted and (wanted[0] < 0 or wanted[-1] > model.n_trees):
        raise ValueError(f"model has {model.n_trees} trees, asked for {wanted}")
    out = {}
    for m, pred in enumerate(_staged(model.trees[:wanted[-1] if wanted else 0], X,
                                     model.init_constant, model.eta)):
        if m in wanted:
            out[m] = pred
    return out
