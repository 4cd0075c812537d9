"""Versioned JSON model files.

Floats are written with ``repr`` precision, so a load reproduces every
threshold and prototype bit for bit.  Training wall times are deliberately
left out; identical training runs produce identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import InputError, SchemaError
from .boosting import BoostedModel
from .ensemble import ModelBundle
from .forest import ForestModel
from .pct import PctTree

FORMAT = "mexpower-model/1"


def _model_to_dict(model) -> dict:
    if isinstance(model, ModelBundle):
        return {"kind": "bundle", **bundle_to_dict(model)}
    if isinstance(model, ForestModel):
        return {"kind": "forest", "mode": model.mode, "target_index": model.target_index,
                "n_features": model.n_features, "f": model.n_sub, "m_leaf": model.m_leaf,
                "seed": model.seed, "bootstrap": model.bootstrap,
                "trees": [t.to_dict() for t in model.trees]}
    if isinstance(model, BoostedModel):
        return {"kind": "boosted", "init_constant": model.init_constant, "eta": model.eta,
                "max_depth": model.max_depth, "row_fraction": model.row_fraction,
                "col_fraction": model.col_fraction, "rounds_used": model.rounds_used,
                "seed": model.seed, "n_features": model.n_features,
                "target_index": model.target_index,
                "validation_rmse": list(model.validation_rmse),
                "trees": [t.to_dict() for t in model.trees]}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _model_from_dict(d: dict):
    kind = d.get("kind")
    trees = [PctTree.from_dict(t) for t in d.get("trees", [])]
    if kind == "bundle":
        return bundle_from_dict(d)
    if kind == "forest":
        return ForestModel(trees, d["mode"], d["target_index"], d["n_features"], d["f"],
                           d["m_leaf"], d["seed"], d["bootstrap"])
    if kind == "boosted":
        return BoostedModel(d["init_constant"], trees, d["eta"], d["max_depth"],
                            d["row_fraction"], d["col_fraction"], d["rounds_used"],
                            d["seed"], d["n_features"], d["target_index"],
                            list(d["validation_rmse"]))
    raise SchemaError(f"unknown model kind {kind!r}")


def bundle_to_dict(bundle: ModelBundle) -> dict:
    return {"format": FORMAT, "method": bundle.method,
            "feature_names": list(bundle.feature_names),
            "target_names": list(bundle.target_names),
            "dataset_digest": bundle.dataset_digest, "params": bundle.params,
            "models": [_model_to_dict(m) for m in bundle.models]}


def bundle_from_dict(d: dict) -> ModelBundle:
    if d.get("format") != FORMAT:
        raise SchemaError(f"unsupported model format {d.get('format')!r}")
    return ModelBundle(d["method"], [_model_from_dict(m) for m in d["models"]],
                       tuple(d["feature_names"]), tuple(d["target_names"]),
                       d["dataset_digest"], d["params"])


def dumps(bundle: ModelBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(bundle: ModelBundle, path) -> None:
    Path(path).write_text(dumps(bundle))


def load_model(path, expected_digest: str | None = None) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        bundle = bundle_from_dict(json.loads(path.read_text()))
    except (KeyError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: malformed model file ({exc})") from exc
    if expected_digest is not None and bundle.dataset_digest != expected_digest:
        raise SchemaError(
            f"{path}: model was trained on feature layout {bundle.dataset_digest}, "
            f"dataset has {expected_digest}")
    return bundle
