"""Genie3 feature importance from stored node statistics."""

from __future__ import annotations

import numpy as np


def tree_importance(tree, n_features: int) -> np.ndarray:
    """Sum of ``h* x |E(N)|`` over the internal nodes testing each feature."""
    internal = tree.feature >= 0
    return np.bincount(tree.feature[internal],
                       weights=tree.gain[internal] * tree.count[internal],
                       minlength=n_features).astype(np.float64)


def genie3_importance(model) -> np.ndarray:
    """Importance of every feature averaged over the ensemble's trees.

    Works for forests and boosted models alike.  Features never tested
    score exactly zero.
    """
    trees = model.trees[:model.rounds_used] if hasattr(model, "rounds_used") else model.trees
    scores = np.zeros(model.n_features)
    if not trees:
        return scores
    for tree in trees:
        scores += tree_importance(tree, model.n_features)
    return scores / len(trees)


def importance_table(models) -> np.ndarray:
    """Targets x features importance matrix from one local model per target."""
    return np.vstack([genie3_importance(m) for m in models])


FEATURE_GROUPS = {
    "influx": "energy_influx",
    "historical": "energy_influx",
    "dmop_tsla": "dmop",
    "dmop_indicator": "dmop",
    "ftl": "ftl",
}


def group_shares(scores, tags) -> dict[str, float]:
    """Share of the total importance held by each feature group.

    All-zero scores (an ensemble of constant trees) give all-zero shares.
    """
    scores = np.asarray(scores, dtype=np.float64)
    groups = sorted(set(FEATURE_GROUPS.values()))
    totals = {g: 0.0 for g in groups}
    for score, tag in zip(scores, tags):
        totals[FEATURE_GROUPS.get(tag, tag)] = totals.get(FEATURE_GROUPS.get(tag, tag), 0.0) + score
    grand = sum(totals.values())
    return {g: (v / grand if grand > 0 else 0.0) for g, v in totals.items()}


def rank_features(scores, names) -> list[tuple[str, float]]:
    """Features sorted by decreasing score, ties by name."""
    return sorted(zip(names, map(float, scores)), key=lambda kv: (-kv[1], kv[0]))
