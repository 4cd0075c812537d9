"""Feature/target datasets, the train/test date split, and CV folds."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import N_TARGETS
from .errors import InputError, SchemaError
from .features import FeatureBlock
from .ingest import AlignedSeries, TimeGrid, read_table, write_table


@dataclass(frozen=True, eq=False)
class Dataset:
    """Kept grid rows with their features ``X`` and targets ``Y``.

    Missing feature entries are NaN; ``Y`` is always complete.  ``rows``
    holds the grid interval index of every kept row, in time order.
    """

    grid: TimeGrid
    X: np.ndarray
    Y: np.ndarray
    rows: np.ndarray
    feature_names: tuple[str, ...]
    target_names: tuple[str, ...]
    split_tag: str = "all"

    def __post_init__(self):
        n = self.rows.size
        if self.X.shape != (n, len(self.feature_names)):
            raise SchemaError("feature matrix does not match the column names")
        if self.Y.shape != (n, len(self.target_names)):
            raise SchemaError("target matrix does not match the target names")
        if len(self.target_names) != N_TARGETS:
            raise SchemaError(
                f"expected {N_TARGETS} target columns, got {len(self.target_names)}")
        if not np.isfinite(self.Y).all():
            raise SchemaError("kept rows must have complete targets")

    def __len__(self) -> int:
        return int(self.rows.size)

    @property
    def times(self) -> np.ndarray:
        return self.grid.starts[self.rows]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def subset(self, index, split_tag: str | None = None) -> Dataset:
        index = np.asarray(index)
        return Dataset(self.grid, _ro(self.X[index]), _ro(self.Y[index]),
                       _ro(self.rows[index]), self.feature_names, self.target_names,
                       split_tag or self.split_tag)

    def manifest(self) -> dict:
        return {
            "format": "mexpower-dataset/1",
            "grid": self.grid.to_dict(),
            "split_tag": self.split_tag,
            "n_rows": len(self),
            "feature_names": list(self.feature_names),
            "target_names": list(self.target_names),
        }

    def digest(self) -> str:
        """Hash of the column layout and grid, used to pair models with data."""
        return manifest_digest(self.grid, self.feature_names, self.target_names)


def manifest_digest(grid: TimeGrid, feature_names, target_names) -> str:
    payload = {"grid_delta_t": grid.delta_t, "features": list(feature_names),
               "targets": list(target_names)}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def assemble_dataset(features: FeatureBlock, targets: AlignedSeries) -> Dataset:
    if features.grid != targets.grid:
        raise SchemaError("features and targets are on different grids")
    if len(targets.columns) != N_TARGETS:
        raise SchemaError(f"expected {N_TARGETS} target columns, got {len(targets.columns)}")
    rows = np.flatnonzero(~targets.missing)
    if rows.size == 0:
        raise ValueError("no rows left after removing missing targets")
    return Dataset(features.grid, _ro(features.values[rows]), _ro(targets.values[rows]),
                   _ro(rows), features.names, targets.columns)


def split_by_date(ds: Dataset, boundary: int) -> tuple[Dataset, Dataset]:
    """Rows whose interval starts before ``boundary`` train, the rest test."""
    before = ds.times < boundary
    if before.all() or not before.any():
        raise ValueError(f"boundary {boundary} leaves one side of the split empty")
    return (ds.subset(np.flatnonzero(before), "train"),
            ds.subset(np.flatnonzero(~before), "test"))


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_id: np.ndarray
    k: int
    seed: int

    def parts(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.fold_id == f) for f in range(self.k)]

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(training indices, validation indices) for one fold."""
        return np.flatnonzero(self.fold_id != fold), np.flatnonzero(self.fold_id == fold)


def kfold(n_or_ds, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Uniform random partition of the kept rows into ``k`` folds of near-equal size."""
    n = len(n_or_ds) if not isinstance(n_or_ds, (int, np.integer)) else int(n_or_ds)
    if k < 2:
        raise ValueError(f"need at least two folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_id = np.empty(n, dtype=np.int64)
    fold_id[perm] = np.arange(n) % k
    fold_id.setflags(write=False)
    return FoldAssignment(fold_id, k, seed)


def save_dataset(ds: Dataset, directory) -> None:
    if len(ds) == 0:
        raise ValueError("refusing to save an empty dataset")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_table(directory / "features.csv", ds.times, ds.feature_names, ds.X)
    write_table(directory / "targets.csv", ds.times, ds.target_names, ds.Y)
    manifest = ds.manifest()
    manifest["digest"] = ds.digest()
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise InputError(f"{path}: no such file")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != "mexpower-dataset/1":
        raise SchemaError(f"{path}: not a dataset manifest")
    grid = TimeGrid(**manifest["grid"])
    t_x, names_x, X = read_table(directory / "features.csv")
    t_y, names_y, Y = read_table(directory / "targets.csv")
    if names_x != tuple(manifest["feature_names"]):
        raise SchemaError(f"{directory}: feature columns do not match the manifest")
    if names_y != tuple(manifest["target_names"]):
        raise SchemaError(f"{directory}: target columns do not match the manifest")
    if t_x.size != manifest["n_rows"] or not np.array_equal(t_x, t_y):
        raise SchemaError(f"{directory}: feature and target rows disagree")
    offsets = t_x - grid.t_first
    if np.any(offsets % grid.step_ms):
        raise SchemaError(f"{directory}: row timestamps are off the grid")
    rows = offsets // grid.step_ms
    ds = Dataset(grid, _ro(X), _ro(Y), _ro(rows.astype(np.int64)), names_x, names_y,
                 manifest["split_tag"])
    if manifest.get("digest") not in (None, ds.digest()):
        raise SchemaError(f"{directory}: manifest digest mismatch")
    return ds
