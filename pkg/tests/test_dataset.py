from __future__ import annotations

import json

import numpy as np
import pytest

from mexpower.dataset import (
    Dataset, assemble_dataset, kfold, load_dataset, save_dataset, split_by_date,
)
from mexpower.errors import InputError, SchemaError
from mexpower.features import FeatureBlock
from mexpower.ingest import MINUTE_MS, AlignedSeries, build_grid

M = MINUTE_MS
TARGETS = tuple(f"NPWD{i:04d}" for i in range(33))


def toy(n=6, missing=()):
    grid = build_grid(0, n * 10 * M, 10)
    X = np.arange(n * 2, dtype=float).reshape(n, 2)
    X[0, 1] = np.nan
    Y = np.tile(np.arange(n, dtype=float)[:, None], (1, 33))
    miss = np.zeros(n, dtype=bool)
    miss[list(missing)] = True
    Y[miss] = np.nan
    block = FeatureBlock(grid, ("a", "b"), X, ("influx", "ftl"))
    return block, AlignedSeries(grid, TARGETS, Y, miss)


def test_assemble_drops_missing_targets():
    block, targets = toy(missing=(2, 4))
    ds = assemble_dataset(block, targets)
    assert ds.rows.tolist() == [0, 1, 3, 5]
    assert ds.Y[:, 0].tolist() == [0, 1, 3, 5]
    assert np.isnan(ds.X[0, 1]) and ds.missing_mask.sum() == 1


def test_assemble_rejects_mismatch():
    block, targets = toy()
    other = AlignedSeries(build_grid(M, 61 * M, 10), TARGETS, targets.values, targets.missing)
    with pytest.raises(SchemaError):
        assemble_dataset(block, other)
    with pytest.raises(ValueError):
        assemble_dataset(block, AlignedSeries(block.grid, TARGETS, targets.values,
                                              np.ones(6, dtype=bool)))


def test_wrong_target_count():
    grid = build_grid(0, 10 * M, 10)
    with pytest.raises(SchemaError):
        Dataset(grid, np.zeros((1, 1)), np.zeros((1, 2)), np.zeros(1, dtype=np.int64),
                ("a",), ("x", "y"))


def test_split_by_date():
    ds = assemble_dataset(*toy())
    train, test = split_by_date(ds, 30 * M)
    assert train.rows.tolist() == [0, 1, 2] and test.rows.tolist() == [3, 4, 5]
    assert (train.split_tag, test.split_tag) == ("train", "test")
    with pytest.raises(ValueError):
        split_by_date(ds, 0)
    with pytest.raises(ValueError):
        split_by_date(ds, 10**12)


def test_split_interval_starting_on_boundary_is_test():
    ds = assemble_dataset(*toy())
    train, test = split_by_date(ds, 20 * M + 1)
    assert train.rows.tolist() == [0, 1, 2]


@pytest.mark.parametrize("n,k", [(10, 5), (11, 3), (100, 7)])
def test_kfold_partitions(n, k):
    folds = kfold(n, k, seed=4)
    parts = folds.parts()
    all_rows = np.concatenate(parts)
    assert np.array_equal(np.sort(all_rows), np.arange(n))
    sizes = [p.size for p in parts]
    assert max(sizes) - min(sizes) <= 1
    tr, va = folds.split(1)
    assert np.intersect1d(tr, va).size == 0 and tr.size + va.size == n


def test_kfold_seeded():
    assert np.array_equal(kfold(50, 5, 1).fold_id, kfold(50, 5, 1).fold_id)
    assert not np.array_equal(kfold(50, 5, 1).fold_id, kfold(50, 5, 2).fold_id)
    with pytest.raises(ValueError):
        kfold(3, 5)
    with pytest.raises(ValueError):
        kfold(10, 1)


def test_save_load_roundtrip(tmp_path):
    ds = assemble_dataset(*toy(missing=(3,)))
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert np.array_equal(back.X, ds.X, equal_nan=True)
    assert np.array_equal(back.Y, ds.Y) and np.array_equal(back.rows, ds.rows)
    assert back.digest() == ds.digest()


def test_load_detects_tampering(tmp_path):
    ds = assemble_dataset(*toy())
    save_dataset(ds, tmp_path / "d")
    path = tmp_path / "d" / "manifest.json"
    manifest = json.loads(path.read_text())
    manifest["digest"] = "0" * 16
    path.write_text(json.dumps(manifest))
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "d")
    with pytest.raises(InputError):
        load_dataset(tmp_path / "missing")


def test_synth_dataset_shape(small_synth):
    ds = small_synth.ds
    assert ds.X.shape[1] == len(small_synth.block.names)
    assert len(small_synth.train) + len(small_synth.test) == len(ds)
