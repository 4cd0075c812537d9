"""Error metrics, learning-time estimates, CV learning curves and Pareto fronts."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import kfold
from .learners.ensemble import train_method


def rmse_per_target(Y_true, Y_pred) -> np.ndarray:
    Y_true = np.asarray(Y_true, dtype=np.float64)
    Y_pred = np.asarray(Y_pred, dtype=np.float64)
    if Y_true.ndim == 1:
        Y_true, Y_pred = Y_true[:, None], Y_pred.reshape(-1, 1)
    if Y_true.shape != Y_pred.shape:
        raise ValueError(f"shape mismatch: {Y_true.shape} vs {Y_pred.shape}")
    if Y_true.shape[0] == 0:
        raise ValueError("RMSE of zero rows is undefined")
    return np.sqrt(np.mean((Y_true - Y_pred) ** 2, axis=0))


def armse(rmse) -> float:
    """Root of the mean squared per-target RMSE."""
    rmse = np.asarray(rmse, dtype=np.float64).reshape(-1)
    if rmse.size == 0:
        raise ValueError("aRMSE of an empty vector")
    return math.sqrt(float(np.mean(rmse ** 2)))


@dataclass
class EvalReport:
    model_id: str
    rmse: list[float]
    armse: float
    n_test: int
    dataset_digest: str = ""
    delta_t: int | None = None
    target_names: list[str] = field(default_factory=list)
    train_hours: float | None = None

    def to_dict(self, with_timing: bool = False) -> dict:
        d = asdict(self)
        if not with_timing:
            d.pop("train_hours")
        return d


def evaluate(bundle, ds, model_id: str | None = None, size: int | None = None) -> EvalReport:
    """Score ``bundle`` on dataset ``ds``."""
    rmse = rmse_per_target(ds.Y, bundle.predict(ds.X, size))
    return EvalReport(model_id or bundle.method, rmse.tolist(), armse(rmse), len(ds),
                      ds.digest(), ds.grid.delta_t, list(ds.target_names),
                      bundle.train_seconds / 3600.0)


def baseline_armse(Y_train, Y_test) -> float:
    """aRMSE of predicting every target by its training mean."""
    Y_train = np.asarray(Y_train, dtype=np.float64)
    Y_test = np.asarray(Y_test, dtype=np.float64)
    return armse(rmse_per_target(Y_test, np.broadcast_to(Y_train.mean(axis=0), Y_test.shape)))


@dataclass(frozen=True)
class TimeEstimate:
    t_alpha: float
    alpha: float
    t: float


def estimate_time(t_alpha: float, alpha: float) -> TimeEstimate:
    """Total learning time extrapolated from building an ``alpha`` share of the ensemble."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if t_alpha < 0:
        raise ValueError(f"measured time must be non-negative, got {t_alpha}")
    return TimeEstimate(float(t_alpha), float(alpha), t_alpha / alpha)


def timed_training(method: str, X, Y, alpha: float = 1.0, n_trees: int = 200,
                   n_rounds: int = 200, **params) -> tuple[object, TimeEstimate]:
    """Train ``alpha`` of the ensemble single-threaded and extrapolate the full time.

    Boosting runs with early stopping disabled so that exactly the requested
    share of rounds is built.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    params = dict(params, n_jobs=1)
    if method in ("xgb", "eoe"):
        params.setdefault("early_stop_rounds", None)
    trees = max(1, int(round(alpha * n_trees)))
    rounds = max(1, int(round(alpha * n_rounds)))
    names = [f"x{i}" for i in range(np.shape(X)[1])]
    targets = [f"y{i}" for i in range(np.shape(Y)[1])]
    start = time.perf_counter()
    bundle = train_method(method, X, Y, names, targets, "", n_trees=trees, n_rounds=rounds,
                          **params)
    elapsed = time.perf_counter() - start
    effective = trees / n_trees if method in ("lrf", "grf") else rounds / n_rounds
    return bundle, estimate_time(elapsed, effective)


def learning_curve_cv(X, Y, method: str, sizes, k: int = 5, seed: int = 0,
                      **params) -> dict:
    """Cross-validated aRMSE of every ensemble size in ``sizes``.

    Each fold trains once at the largest size and scores every prefix on its
    held-out part.  Random forest prefixes coincide with smaller forests
    thanks to per-tree seeding; boosting prefixes are its partial sums, so
    early stopping is switched off here.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or sizes != sorted(sizes) or sizes[0] < 1:
        raise ValueError("sizes must be ascending positive integers")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    folds = kfold(X.shape[0], k, seed)
    largest = sizes[-1]
    params = dict(params)
    if method in ("xgb", "eoe"):
        params["early_stop_rounds"] = None
    names = [f"x{i}" for i in range(X.shape[1])]
    targets = [f"y{i}" for i in range(Y.shape[1])]
    per_fold = []
    for fold in range(k):
        train_idx, val_idx = folds.split(fold)
        bundle = train_method(method, X[train_idx], Y[train_idx], names, targets, "",
                              n_trees=largest, n_rounds=largest, seed=seed, **params)
        staged = bundle.predict_sizes(X[val_idx], sizes)
        per_fold.append([armse(rmse_per_target(Y[val_idx], staged[s])) for s in sizes])
    per_fold = np.array(per_fold)
    return {"method": method, "sizes": sizes, "k": k, "seed": seed,
            "armse": per_fold.mean(axis=0).tolist(), "fold_armse": per_fold.tolist()}


@dataclass(frozen=True)
class ParetoPoint:
    label: str
    time: float
    error: float


def dominates(b: ParetoPoint, a: ParetoPoint) -> bool:
    """True when ``b`` is no worse than ``a`` in both criteria and better in one."""
    return (b.time <= a.time and b.error <= a.error
            and (b.time < a.time or b.error < a.error))


def pareto_front(points) -> list[ParetoPoint]:
    """Non-dominated points, sorted by time (then error, then label)."""
    pts = sorted(points, key=lambda p: (p.time, p.error, p.label))
    front = []
    best = math.inf
    i = 0
    while i < len(pts):
        j = i
        while j < len(pts) and pts[j].time == pts[i].time:
            j += 1
        group_min = pts[i].error
        if group_min < best:
            front.extend(p for p in pts[i:j] if p.error == group_min)
            best = group_min
        i = j
    return front


def write_pareto(points, front, directory) -> None:
    """``pareto.json`` with every point flagged, ``pareto.csv`` for plotting."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    on_front = {(p.label, p.time, p.error) for p in front}
    rows = [dict(asdict(p), pareto=(p.label, p.time, p.error) in on_front)
            for p in sorted(points, key=lambda p: (p.time, p.error, p.label))]
    (directory / "pareto.json").write_text(json.dumps(
        {"front": [asdict(p) for p in front], "points": rows}, indent=2) + "\n")
    with open(directory / "pareto.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["time", "error", "label", "pareto"],
                                lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r[k] for k in ("time", "error", "label", "pareto")})
