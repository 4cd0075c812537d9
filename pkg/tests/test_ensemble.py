from __future__ import annotations

import numpy as np
import pytest

from mexpower.errors import InputError, SchemaError
from mexpower.learners import (
    METHODS, dumps, ensemble_of_ensembles, load_model, save_model, train_method,
)

TARGETS = tuple(f"T{i}" for i in range(3))


def data(rng, n=80, p=4):
    X = rng.normal(size=(n, p))
    X[rng.random(size=X.shape) < 0.05] = np.nan
    Y = np.column_stack([np.nan_to_num(X[:, 0]), np.nan_to_num(X[:, 1]) ** 2,
                         rng.normal(size=n)])
    return X, Y


def train(method, X, Y, **kw):
    kw.setdefault("n_trees", 4)
    kw.setdefault("n_rounds", 4)
    names = [f"f{i}" for i in range(X.shape[1])]
    return train_method(method, X, Y, names, TARGETS, "abc", **kw)


def test_eoe_mean():
    a, b = np.array([[1.0, 2.0]]), np.array([[3.0, 6.0]])
    assert ensemble_of_ensembles([a, b]).tolist() == [[2.0, 4.0]]
    with pytest.raises(ValueError):
        ensemble_of_ensembles([a])
    with pytest.raises(ValueError):
        ensemble_of_ensembles([a, np.zeros((2, 2))])


@pytest.mark.parametrize("method", METHODS)
def test_every_method_predicts_all_targets(method, rng):
    X, Y = data(rng)
    bundle = train(method, X, Y)
    assert bundle.predict(X).shape == Y.shape
    assert bundle.importance().shape == (4,)


def test_eoe_is_member_average(rng):
    X, Y = data(rng)
    eoe = train("eoe", X, Y, members=("xgb", "grf"))
    members = [m.predict(X) for m in eoe.models]
    assert np.array_equal(eoe.predict(X), (members[0] + members[1]) / 2)
    with pytest.raises(ValueError):
        train("eoe", X, Y, members=("xgb",))


def test_predict_sizes_match_predict(rng):
    X, Y = data(rng)
    for method in ("grf", "lrf", "xgb"):
        bundle = train(method, X, Y, early_stop_rounds=None)
        sizes = bundle.predict_sizes(X, [1, 3, 4])
        for s, pred in sizes.items():
            assert np.allclose(pred, bundle.predict(X, s), rtol=0, atol=1e-13), method


def test_target_importance(rng):
    X, Y = data(rng)
    assert train("lrf", X, Y).target_importance().shape == (3, 4)
    assert train("grf", X, Y).target_importance() is None


def test_unknown_method(rng):
    with pytest.raises(ValueError):
        train("svm", *data(rng))


@pytest.mark.parametrize("method", METHODS)
def test_serialisation_roundtrip(method, rng, tmp_path):
    X, Y = data(rng)
    bundle = train(method, X, Y)
    path = tmp_path / "m.json"
    save_model(bundle, path)
    back = load_model(path, expected_digest="abc")
    assert np.array_equal(back.predict(X), bundle.predict(X))
    assert dumps(back) == path.read_text()


def test_identical_training_gives_identical_files(rng):
    X, Y = data(rng)
    assert dumps(train("xgb", X, Y, seed=3)) == dumps(train("xgb", X, Y, seed=3))


def test_load_errors(rng, tmp_path):
    X, Y = data(rng)
    path = tmp_path / "m.json"
    save_model(train("grf", X, Y), path)
    with pytest.raises(SchemaError):
        load_model(path, expected_digest="other")
    with pytest.raises(InputError):
        load_model(tmp_path / "none.json")
    path.write_text('{"format": "mexpower-model/1"}')
    with pytest.raises(SchemaError):
        load_model(path)
    path.write_text('{"format": "v0"}')
    with pytest.raises(SchemaError):
        load_model(path)
