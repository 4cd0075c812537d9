"""Command-line driver: ``mexpower <subcommand> [options]``.

Every subcommand reads and writes under one run directory::

    RUN/raw/                      stream tables (+ answer.json from synth)
    RUN/ingest/                   grid.json, targets.csv, report.json
    RUN/features/                 features.csv, features.manifest.json
    RUN/dataset/{train,test}/     features.csv, targets.csv, manifest.json
    RUN/models/METHOD.json        model; METHOD.meta.json holds timings
    RUN/predictions/METHOD_SPLIT.csv
    RUN/reports/                  eval_/importance_/curve_ reports, pareto.json/csv

Report files are byte-identical across identical runs; wall-clock
measurements go to ``*.meta.json`` sidecars.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import evaluation, synthgen
from .config import (
    GBT_COL_FRACTION, GBT_EARLY_STOP, GBT_LEARNING_RATE, GBT_MAX_DEPTH, GBT_ROUNDS,
    GBT_ROW_FRACTION, GBT_VALIDATION_FRACTION, RF_TREES, THETA_MINUTES,
    TRAIN_TEST_BOUNDARY, default_feature_subset, default_horizons, default_min_leaf,
    to_millis,
)
from .dataset import assemble_dataset, load_dataset, save_dataset, split_by_date
from .errors import ConfigError, InputError, MexPowerError, SchemaError
from .features import featurize, load_features, save_features
from .ingest import (
    GAP_LIMIT_MS, StreamKind, TimeGrid, grid_for_logs, load_aligned, parse_stream,
    resample_targets, save_aligned, write_table,
)
from .learners import METHODS, group_shares, load_model, rank_features, save_model, train_method

logger = logging.getLogger("mexpower")

ENV_PATHS = {"raw_dir": "MEXPOWER_RAW_DIR", "run_dir": "MEXPOWER_RUN_DIR"}


@dataclass
class RunConfig:
    run_dir: str = "run"
    raw_dir: str | None = None
    scenario: str | None = None
    delta_t: int = 15
    horizons: list[int] | None = None
    theta: float = THETA_MINUTES
    boundary: str = TRAIN_TEST_BOUNDARY.date().isoformat()
    method: str = "grf"
    n_trees: int = RF_TREES
    feature_subset: int | None = None
    min_leaf: int | None = None
    n_rounds: int = GBT_ROUNDS
    eta: float = GBT_LEARNING_RATE
    max_depth: int = GBT_MAX_DEPTH
    row_fraction: float = GBT_ROW_FRACTION
    col_fraction: float = GBT_COL_FRACTION
    early_stop_rounds: int | None = GBT_EARLY_STOP
    validation_fraction: float = GBT_VALIDATION_FRACTION
    members: list[str] = field(default_factory=lambda: ["xgb", "lrf"])
    alpha: float = 1.0
    sizes: list[int] = field(default_factory=lambda: [1, 10, 25, 50, 100, 200])
    folds: int = 5
    seed: int = 0
    threads: int = 1
    single_threaded_timing: bool = False

    @property
    def raw(self) -> Path:
        return Path(self.raw_dir) if self.raw_dir else Path(self.run_dir) / "raw"

    @property
    def run(self) -> Path:
        return Path(self.run_dir)

    @property
    def n_jobs(self) -> int:
        return 1 if self.single_threaded_timing else self.threads

    def validate(self) -> RunConfig:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.delta_t) != self.delta_t or self.delta_t <= 0:
            raise ConfigError(f"delta_t must be a positive integer, got {self.delta_t}")
        if self.horizons is not None and (not self.horizons
                                          or any(int(h) != h or h < 1 for h in self.horizons)):
            raise ConfigError(f"horizons must be positive integers, got {self.horizons}")
        if not self.theta > 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")
        for name in ("n_trees", "max_depth", "folds", "threads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_rounds < 0:
            raise ConfigError(f"n_rounds must be >= 0, got {self.n_rounds}")
        for name in ("feature_subset", "min_leaf", "early_stop_rounds"):
            v = getattr(self, name)
            if v is not None and int(v) < 0:
                raise ConfigError(f"{name} must be non-negative, got {v}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        for name in ("row_fraction", "col_fraction", "alpha"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {getattr(self, name)}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if not self.sizes or sorted(self.sizes) != list(self.sizes) or self.sizes[0] < 1:
            raise ConfigError(f"sizes must be ascending positive integers, got {self.sizes}")
        if len(self.members) < 2 or any(m not in ("lrf", "grf", "xgb") for m in self.members):
            raise ConfigError(f"members must name two or more of lrf, grf, xgb, got {self.members}")
        return self


def load_config(path: str | None, overrides: dict, env=os.environ) -> RunConfig:
    """Defaults < config file < path env vars < command-line flags."""
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {unknown}")
    for name, var in ENV_PATHS.items():
        if env.get(var):
            data[name] = env[var]
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_boundary(text, grid: TimeGrid | None = None) -> int:
    """``midpoint`` (of the grid), integer milliseconds, or an ISO date/time (UTC)."""
    text = str(text).strip()
    if text == "midpoint":
        if grid is None:
            raise ConfigError("boundary 'midpoint' needs a grid")
        return grid.t_first + (grid.t_last - grid.t_first) // 2
    if text.isdigit():
        return int(text)
    try:
        moment = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse boundary {text!r}") from exc
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return to_millis(moment)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def _load_logs(raw: Path) -> dict:
    logs = {}
    for kind, name in synthgen.STREAM_FILES.items():
        path = raw / name
        if path.exists():
            logs[StreamKind(kind)] = parse_stream(path, kind)
        elif kind in ("SAA", "LTDATA", "POWER"):
            raise InputError(f"{path}: required stream missing")
    return logs


def _grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(**_read_json(cfg.run / "ingest" / "grid.json"))


# subcommands --------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> str:
    scenario = (synthgen.load_scenario(cfg.scenario) if cfg.scenario
                else synthgen.SynthScenario(seed=cfg.seed))
    if args.days is not None:
        scenario.duration_days = args.days
        scenario.validate()
    paths = synthgen.generate(scenario, cfg.raw)
    return f"synth: {scenario.duration_days:g} days, seed {scenario.seed} -> {paths['POWER'].parent}"


def cmd_ingest(cfg: RunConfig, args) -> str:
    logs = _load_logs(cfg.raw)
    power = logs[StreamKind.POWER]
    grid = grid_for_logs([power], cfg.delta_t)
    targets = resample_targets(power, grid, GAP_LIMIT_MS)
    out = cfg.run / "ingest"
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "grid.json", grid.to_dict())
    save_aligned(targets, out / "targets.csv")
    report = {"delta_t": cfg.delta_t, "n_intervals": grid.n_intervals,
              "n_missing": int(targets.missing.sum()),
              "records": {k.value: len(v) for k, v in sorted(logs.items(), key=lambda kv: kv[0].value)}}
    _write_json(out / "report.json", report)
    return (f"ingest: {grid.n_intervals} intervals of {cfg.delta_t} min, "
            f"{report['n_missing']} missing, {len(targets.columns)} targets")


def cmd_featurize(cfg: RunConfig, args) -> str:
    logs = _load_logs(cfg.raw)
    grid_path = cfg.run / "ingest" / "grid.json"
    grid = _grid(cfg) if grid_path.exists() else grid_for_logs([logs[StreamKind.POWER]], cfg.delta_t)
    if grid.delta_t != cfg.delta_t:
        raise ConfigError(f"ingest grid uses delta_t={grid.delta_t}, config asks {cfg.delta_t}; "
                          "re-run ingest")
    boundary = parse_boundary(cfg.boundary, grid)
    horizons = cfg.horizons or default_horizons(cfg.delta_t)
    block, manifest = featurize(logs, grid, boundary, horizons, cfg.theta)
    save_features(block, manifest, cfg.run / "features")
    return (f"featurize: {block.values.shape[0]} rows x {block.width} features, "
            f"horizons {list(manifest.horizons)}")


def cmd_split(cfg: RunConfig, args) -> str:
    block, manifest = load_features(cfg.run / "features")
    targets = load_aligned(cfg.run / "ingest" / "targets.csv", manifest.grid)
    ds = assemble_dataset(block, targets)
    boundary = parse_boundary(cfg.boundary, manifest.grid)
    train, test = split_by_date(ds, boundary)
    save_dataset(train, cfg.run / "dataset" / "train")
    save_dataset(test, cfg.run / "dataset" / "test")
    return f"split: {len(train)} train rows, {len(test)} test rows, digest {ds.digest()}"


def _train_params(cfg: RunConfig, ds) -> dict:
    # the leaf-size default follows the dataset's own granularity
    return {"n_trees": cfg.n_trees,
            "f": cfg.feature_subset or default_feature_subset(len(ds.feature_names)),
            "m_leaf": cfg.min_leaf or default_min_leaf(ds.grid.delta_t),
            "n_rounds": cfg.n_rounds, "eta": cfg.eta, "max_depth": cfg.max_depth,
            "row_fraction": cfg.row_fraction, "col_fraction": cfg.col_fraction,
            "early_stop_rounds": cfg.early_stop_rounds or None,
            "validation_fraction": cfg.validation_fraction,
            "members": tuple(cfg.members), "seed": cfg.seed}


def cmd_train(cfg: RunConfig, args) -> str:
    train = load_dataset(cfg.run / "dataset" / "train")
    params = _train_params(cfg, train)
    if cfg.alpha < 1:
        params["n_trees"] = max(1, round(cfg.alpha * cfg.n_trees))
        params["n_rounds"] = max(1, round(cfg.alpha * cfg.n_rounds))
    start = time.perf_counter()
    bundle = train_method(cfg.method, train.X, train.Y, train.feature_names,
                          train.target_names, train.digest(), n_jobs=cfg.n_jobs, **params)
    elapsed = time.perf_counter() - start
    path = cfg.run / "models" / f"{cfg.method}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(bundle, path)
    estimate = evaluation.estimate_time(elapsed, cfg.alpha)
    _write_json(_meta_path(path), {"train_seconds": elapsed, "alpha": cfg.alpha,
                                   "estimated_seconds": estimate.t, "threads": cfg.n_jobs})
    return (f"train: {cfg.method} on {len(train)} rows x {len(train.feature_names)} features "
            f"in {elapsed:.2f} s (estimated full {estimate.t:.2f} s) -> {path}")


def _model_and_split(cfg: RunConfig, split: str):
    ds = load_dataset(cfg.run / "dataset" / split)
    bundle = load_model(cfg.run / "models" / f"{cfg.method}.json", ds.digest())
    return bundle, ds


def cmd_predict(cfg: RunConfig, args) -> str:
    bundle, ds = _model_and_split(cfg, args.split)
    pred = bundle.predict(ds.X)
    path = cfg.run / "predictions" / f"{cfg.method}_{args.split}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_table(path, ds.times, ds.target_names, pred)
    return f"predict: {pred.shape[0]} rows x {pred.shape[1]} targets -> {path}"


def cmd_evaluate(cfg: RunConfig, args) -> str:
    bundle, ds = _model_and_split(cfg, args.split)
    report = evaluation.evaluate(bundle, ds, cfg.method)
    meta_src = cfg.run / "models" / f"{cfg.method}.meta.json"
    meta = _read_json(meta_src) if meta_src.exists() else {}
    seconds = meta.get("estimated_seconds", meta.get("train_seconds"))
    report.train_hours = None if seconds is None else seconds / 3600.0
    path = cfg.run / "reports" / f"eval_{cfg.method}.json"
    _write_json(path, report.to_dict())
    _write_json(_meta_path(path), {"train_hours": report.train_hours})
    return f"evaluate: {cfg.method} aRMSE {report.armse:.6f} on {report.n_test} rows"


def cmd_importance(cfg: RunConfig, args) -> str:
    bundle = load_model(cfg.run / "models" / f"{cfg.method}.json")
    _, manifest = load_features(cfg.run / "features")
    tags = dict(zip(manifest.columns, manifest.tags))
    scores = bundle.importance()
    names = list(bundle.feature_names)
    payload = {"method": cfg.method, "dataset_digest": bundle.dataset_digest,
               "ranking": [{"feature": n, "score": s} for n, s in rank_features(scores, names)],
               "group_shares": group_shares(scores, [tags.get(n, "") for n in names])}
    per_target = bundle.target_importance()
    source = cfg.method
    lrf_path = cfg.run / "models" / "lrf.json"
    if per_target is None and cfg.method == "grf" and lrf_path.exists():
        # a global forest has no per-target view; take it from the local forests
        per_target = load_model(lrf_path, bundle.dataset_digest).target_importance()
        source = "lrf"
    if per_target is not None:
        payload["per_target_source"] = source
        payload["per_target"] = {t: row.tolist() for t, row in zip(bundle.target_names, per_target)}
    path = cfg.run / "reports" / f"importance_{cfg.method}.json"
    _write_json(path, payload)
    top = payload["ranking"][0]["feature"] if names else "-"
    return f"importance: {cfg.method} over {len(names)} features, top {top}"


def cmd_curve(cfg: RunConfig, args) -> str:
    train = load_dataset(cfg.run / "dataset" / "train")
    params = _train_params(cfg, train)
    for k in ("n_trees", "n_rounds", "seed"):
        params.pop(k)
    params["n_jobs"] = cfg.n_jobs
    start = time.perf_counter()
    curve = evaluation.learning_curve_cv(train.X, train.Y, cfg.method, cfg.sizes,
                                         k=cfg.folds, seed=cfg.seed, **params)
    elapsed = time.perf_counter() - start
    curve["dataset_digest"] = train.digest()
    path = cfg.run / "reports" / f"curve_{cfg.method}.json"
    _write_json(path, curve)
    _write_json(_meta_path(path), {"seconds": elapsed})
    best = int(np.argmin(curve["armse"]))
    return (f"curve: {cfg.method} {len(cfg.sizes)} sizes x {cfg.folds} folds, "
            f"best aRMSE {curve['armse'][best]:.6f} at size {cfg.sizes[best]}")


def cmd_pareto(cfg: RunConfig, args) -> str:
    dirs = [Path(d) for d in (args.results or [cfg.run / "reports"])]
    points = []
    for d in dirs:
        for path in sorted(d.glob("eval_*.json")):
            if path.name.endswith(".meta.json"):
                continue
            report = _read_json(path)
            meta = _read_json(_meta_path(path)) if _meta_path(path).exists() else {}
            if meta.get("train_hours") is None:
                logger.warning("%s has no timing sidecar; skipped", path)
                continue
            label = f"{report['model_id']}@{report.get('delta_t')}"
            points.append(evaluation.ParetoPoint(label, meta["train_hours"] * 3600.0,
                                                 report["armse"]))
    if not points:
        raise InputError(f"no evaluation reports with timings under {[str(d) for d in dirs]}")
    front = evaluation.pareto_front(points)
    out = Path(args.output) if args.output else cfg.run / "reports"
    evaluation.write_pareto(points, front, out)
    return f"pareto: {len(front)} of {len(points)} points non-dominated -> {out / 'pareto.json'}"


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "featurize": cmd_featurize,
    "split": cmd_split, "train": cmd_train, "predict": cmd_predict,
    "evaluate": cmd_evaluate, "importance": cmd_importance, "curve": cmd_curve,
    "pareto": cmd_pareto,
}

# flag -> RunConfig field, for the options shared by every subcommand
_SHARED = [
    ("--run-dir", "run_dir", str), ("--raw-dir", "raw_dir", str),
    ("--delta-t", "delta_t", int), ("--theta", "theta", float),
    ("--boundary", "boundary", str), ("--method", "method", str),
    ("--n-trees", "n_trees", int), ("--feature-subset", "feature_subset", int),
    ("--min-leaf", "min_leaf", int), ("--n-rounds", "n_rounds", int),
    ("--eta", "eta", float), ("--max-depth", "max_depth", int),
    ("--row-fraction", "row_fraction", float), ("--col-fraction", "col_fraction", float),
    ("--early-stop-rounds", "early_stop_rounds", int),
    ("--validation-fraction", "validation_fraction", float),
    ("--alpha", "alpha", float), ("--folds", "folds", int),
    ("--seed", "seed", int), ("--threads", "threads", int),
]


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    for flag, dest, typ in _SHARED:
        common.add_argument(flag, dest=dest, type=typ, default=None)
    common.add_argument("--horizons", type=_int_list, default=None)
    common.add_argument("--sizes", type=_int_list, default=None)
    common.add_argument("--members", type=lambda s: s.split(","), default=None)
    common.add_argument("--single-threaded-timing", dest="single_threaded_timing",
                        action="store_const", const=True, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mexpower",
                                     description="Spacecraft thermal power prediction pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="generate synthetic streams")
    p.add_argument("--scenario", default=None, help="JSON scenario file")
    p.add_argument("--days", type=float, default=None)
    sub.add_parser("ingest", parents=[common], help="parse streams, resample targets")
    sub.add_parser("featurize", parents=[common], help="engineer the feature table")
    sub.add_parser("split", parents=[common], help="train/test split at the boundary")
    sub.add_parser("train", parents=[common], help="train one method")
    for name in ("predict", "evaluate"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--split", choices=("train", "test"), default="test")
    sub.add_parser("importance", parents=[common], help="Genie3 feature ranking")
    sub.add_parser("curve", parents=[common], help="cross-validated ensemble-size curve")
    p = sub.add_parser("pareto", parents=[common], help="time/error Pareto front")
    p.add_argument("--results", nargs="*", default=None, help="report directories to scan")
    p.add_argument("--output", default=None)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    try:
        cfg = load_config(args.config, overrides)
        print(COMMANDS[args.command](cfg, args))
        return 0
    except MexPowerError as exc:
        print(f"mexpower {args.command}: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mexpower {args.command}: io error: {exc}", file=sys.stderr)
        return InputError.exit_code
    except (ValueError, ArithmeticError) as exc:
        print(f"mexpower {args.command}: numeric error: {exc}", file=sys.stderr)
        return 5


def main() -> None:
    sys.exit(run())


__all__ = ["RunConfig", "load_config", "parse_boundary", "build_parser", "run", "main",
           "COMMANDS"]
