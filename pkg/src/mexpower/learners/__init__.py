"""Tree ensembles: PCTs, random forests of PCTs, boosted trees."""

from .boosting import BoostedModel, predict_gbt, staged_predict, train_gbt, train_local_gbt
from .ensemble import METHODS, ModelBundle, ensemble_of_ensembles, train_method
from .forest import (
    GLOBAL, LOCAL, ForestModel, predict_forest, train_local_forests, train_random_forest,
)
from .importance import genie3_importance, group_shares, importance_table, rank_features
from .pct import PctTree, SplitTest, find_best_test, induce_pct, variance_heuristic
from .serialize import dumps, load_model, save_model

__all__ = [
    "BoostedModel", "ForestModel", "ModelBundle", "PctTree", "SplitTest",
    "GLOBAL", "LOCAL", "METHODS",
    "variance_heuristic", "find_best_test", "induce_pct",
    "train_random_forest", "train_local_forests", "predict_forest",
    "train_gbt", "train_local_gbt", "predict_gbt", "staged_predict",
    "genie3_importance", "importance_table", "group_shares", "rank_features",
    "ensemble_of_ensembles", "train_method",
    "save_model", "load_model", "dumps",
]
