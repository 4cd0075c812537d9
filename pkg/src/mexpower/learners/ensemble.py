"""Method-level model bundles and the ensemble-of-ensembles combination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import (
    GBT_COL_FRACTION, GBT_EARLY_STOP, GBT_LEARNING_RATE, GBT_MAX_DEPTH, GBT_ROUNDS,
    GBT_ROW_FRACTION, GBT_VALIDATION_FRACTION, RF_TREES,
)
from .boosting import BoostedModel, staged_predict, train_local_gbt
from .forest import ForestModel, predict_forest, train_local_forests, train_random_forest
from .importance import genie3_importance

METHODS = ("lrf", "grf", "xgb", "eoe")


def ensemble_of_ensembles(predictions) -> np.ndarray:
    """Unweighted element-wise mean of two or more prediction matrices."""
    predictions = [np.asarray(p, dtype=np.float64) for p in predictions]
    if len(predictions) < 2:
        raise ValueError("an ensemble of ensembles needs at least two members")
    shape = predictions[0].shape
    if any(p.shape != shape for p in predictions):
        raise ValueError(f"member predictions differ in shape: {[p.shape for p in predictions]}")
    total = np.zeros(shape)
    for p in predictions:
        total += p
    return total / len(predictions)


@dataclass(eq=False)
class ModelBundle:
    """Everything one method needs to predict all targets.

    ``models`` is one global forest (grf), one forest per target (lrf), one
    boosted model per target (xgb), or member bundles (eoe).
    """

    method: str
    models: list
    feature_names: tuple[str, ...]
    target_names: tuple[str, ...]
    dataset_digest: str
    params: dict = field(default_factory=dict)

    @property
    def train_seconds(self) -> float:
        return float(sum(m.train_seconds for m in self.models))

    @property
    def size(self) -> int:
        """Ensemble size: trees per forest or boosting rounds per target."""
        if self.method == "eoe":
            return min(m.size for m in self.models)
        return max(m.n_trees for m in self.models)

    def predict(self, X, size: int | None = None) -> np.ndarray:
        if self.method == "eoe":
            return ensemble_of_ensembles([m.predict(X, size) for m in self.models])
        if self.method == "grf":
            return predict_forest(self.models[0], X, size)
        if self.method == "lrf":
            return predict_forest(self.models, X, size)
        return np.column_stack([m.predict(X, size) for m in self.models])

    def predict_sizes(self, X, sizes) -> dict[int, np.ndarray]:
        """Predictions of every ensemble prefix in ``sizes``."""
        sizes = sorted({int(s) for s in sizes})
        if self.method == "xgb":
            staged = [staged_predict(m, X, sizes) for m in self.models]
            return {s: np.column_stack([st[s] for st in staged]) for s in sizes}
        if self.method == "eoe":
            parts = [m.predict_sizes(X, sizes) for m in self.models]
            return {s: ensemble_of_ensembles([p[s] for p in parts]) for s in sizes}
        forests = self.models
        out = {}
        totals = [np.zeros((np.shape(X)[0], f.trees[0].n_targets)) for f in forests]
        done = 0
        for s in sizes:
            for i, forest in enumerate(forests):
                for tree in forest.trees[done:s]:
                    totals[i] += tree.predict(X)
            done = s
            out[s] = totals[0] / s if self.method == "grf" else np.column_stack([t / s for t in totals])
        return out

    def importance(self) -> np.ndarray:
        """Global importance: mean over the per-model Genie3 vectors."""
        if self.method == "eoe":
            return np.mean([m.importance() for m in self.models], axis=0)
        return np.mean([genie3_importance(m) for m in self.models], axis=0)

    def target_importance(self) -> np.ndarray | None:
        """Targets x features importances, available for local methods only."""
        if self.method in ("lrf", "xgb"):
            return np.vstack([genie3_importance(m) for m in self.models])
        return None


def train_method(method: str, X, Y, feature_names, target_names, dataset_digest: str,
                 *, n_trees: int = RF_TREES, f: int | None = None, m_leaf: int = 1,
                 n_rounds: int = GBT_ROUNDS, eta: float = GBT_LEARNING_RATE,
                 max_depth: int = GBT_MAX_DEPTH, row_fraction: float = GBT_ROW_FRACTION,
                 col_fraction: float = GBT_COL_FRACTION,
                 early_stop_rounds: int | None = GBT_EARLY_STOP,
                 validation_fraction: float = GBT_VALIDATION_FRACTION,
                 members=("xgb", "lrf"), seed: int = 0, n_jobs: int = 1) -> ModelBundle:
    """Train one of ``lrf``, ``grf``, ``xgb`` or ``eoe`` on ``(X, Y)``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    rf = {"n_trees": n_trees, "f": f, "m_leaf": m_leaf, "seed": seed, "n_jobs": n_jobs}
    gb = {"n_rounds": n_rounds, "eta": eta, "max_depth": max_depth,
          "row_fraction": row_fraction, "col_fraction": col_fraction,
          "early_stop_rounds": early_stop_rounds,
          "validation_fraction": validation_fraction, "seed": seed}
    if method == "grf":
        models = [train_random_forest(X, Y, mode="global", **rf)]
    elif method == "lrf":
        models = train_local_forests(X, Y, **rf)
    elif method == "xgb":
        models = train_local_gbt(X, Y, n_jobs=n_jobs, **gb)
    else:
        members = tuple(members)
        if len(members) < 2 or "eoe" in members:
            raise ValueError("an ensemble of ensembles needs two or more base methods")
        shared = {k: v for k, v in gb.items() if k != "seed"}
        models = [train_method(m, X, Y, feature_names, target_names, dataset_digest,
                               n_trees=n_trees, f=f, m_leaf=m_leaf, seed=seed,
                               n_jobs=n_jobs, **shared)
                  for m in members]
    if method in ("grf", "lrf"):
        params = {"method": method, "n_trees": n_trees, "f": models[0].n_sub,
                  "m_leaf": m_leaf, "seed": seed}
    elif method == "xgb":
        params = dict(gb, method=method)
    else:
        params = {"method": method, "members": list(members), "seed": seed}
    return ModelBundle(method, models, tuple(feature_names), tuple(target_names),
                       dataset_digest, params)


__all__ = ["ensemble_of_ensembles", "ModelBundle", "train_method", "METHODS",
           "ForestModel", "BoostedModel"]
