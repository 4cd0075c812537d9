from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import dominated_oracle
from mexpower.evaluation import (
    ParetoPoint, armse, baseline_armse, dominates, estimate_time, evaluate,
    learning_curve_cv, pareto_front, rmse_per_target, timed_training, write_pareto,
)
from mexpower.learners import train_method


class TestMetrics:
    def test_rmse_per_target(self):
        r = rmse_per_target([[0.0, 0.0], [0.0, 0.0]], [[3.0, 1.0], [-3.0, 1.0]])
        assert r.tolist() == [3.0, 1.0]

    def test_armse_of_three_and_four(self):
        assert armse([3.0, 4.0]) == math.sqrt(12.5)

    def test_errors(self):
        with pytest.raises(ValueError):
            rmse_per_target(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            rmse_per_target(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            armse([])

    def test_baseline(self):
        train = np.array([[0.0], [2.0]])
        test = np.array([[1.0], [3.0]])
        assert baseline_armse(train, test) == math.sqrt(2.0)

    def test_evaluate_report(self, small_synth):
        bundle = train_method("grf", small_synth.train.X, small_synth.train.Y,
                              small_synth.ds.feature_names, small_synth.ds.target_names,
                              small_synth.ds.digest(), n_trees=3, m_leaf=20)
        report = evaluate(bundle, small_synth.test)
        assert report.n_test == len(small_synth.test) and len(report.rmse) == 33
        assert report.armse == armse(report.rmse)
        assert "train_hours" not in report.to_dict()
        assert report.to_dict(with_timing=True)["train_hours"] >= 0


class TestTiming:
    def test_estimate_is_exact(self):
        est = estimate_time(3.0, 0.25)
        assert est.t == 12.0 and est.t_alpha == 3.0 and est.alpha == 0.25
        assert estimate_time(5.0, 1.0).t == 5.0

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            estimate_time(1.0, alpha)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            estimate_time(-1.0, 0.5)

    def test_timed_training_builds_share(self, rng):
        X, Y = rng.normal(size=(40, 3)), rng.normal(size=(40, 2))
        bundle, est = timed_training("grf", X, Y, alpha=0.1, n_trees=20)
        assert bundle.size == 2 and est.alpha == 0.1
        bundle, est = timed_training("xgb", X, Y, alpha=0.5, n_rounds=6)
        assert bundle.size == 3 and est.t == est.t_alpha / 0.5


class TestCurve:
    def test_shape_and_prefixes(self, rng):
        X = rng.normal(size=(60, 3))
        Y = np.column_stack([X[:, 0], X[:, 1]])
        out = learning_curve_cv(X, Y, "grf", [1, 2, 4], k=3, seed=1)
        assert out["sizes"] == [1, 2, 4] and len(out["armse"]) == 3
        assert np.array(out["fold_armse"]).shape == (3, 3)
        assert np.allclose(out["armse"], np.mean(out["fold_armse"], axis=0))

    def test_prefix_equals_direct_training(self, rng):
        X = rng.normal(size=(40, 2))
        Y = X[:, :1] ** 2
        curve = learning_curve_cv(X, Y, "xgb", [2, 5], k=2, seed=0)
        direct = learning_curve_cv(X, Y, "xgb", [2], k=2, seed=0)
        assert curve["armse"][0] == direct["armse"][0]

    def test_bad_sizes(self, rng):
        with pytest.raises(ValueError):
            learning_curve_cv(np.zeros((10, 1)), np.zeros((10, 1)), "grf", [3, 1])


class TestPareto:
    def test_example(self):
        pts = [ParetoPoint("a", 1, 5), ParetoPoint("b", 2, 3), ParetoPoint("c", 3, 4),
               ParetoPoint("d", 4, 1), ParetoPoint("e", 2, 3)]
        labels = [p.label for p in pareto_front(pts)]
        assert labels == ["a", "b", "e", "d"]

    def test_dominates(self):
        a, b = ParetoPoint("a", 1, 1), ParetoPoint("b", 1, 2)
        assert dominates(a, b) and not dominates(b, a) and not dominates(a, a)

    def test_empty(self):
        assert pareto_front([]) == []

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=25))
    def test_matches_oracle(self, pairs):
        pts = [ParetoPoint(str(i), float(t), float(e)) for i, (t, e) in enumerate(pairs)]
        got = sorted(p.label for p in pareto_front(pts))
        assert got == sorted(pts[i].label for i in dominated_oracle(pts))

    def test_write(self, tmp_path):
        pts = [ParetoPoint("a", 1, 2), ParetoPoint("b", 2, 3)]
        write_pareto(pts, pareto_front(pts), tmp_path)
        data = json.loads((tmp_path / "pareto.json").read_text())
        assert [p["label"] for p in data["front"]] == ["a"]
        rows = list(csv.DictReader(open(tmp_path / "pareto.csv")))
        assert [(r["label"], r["pareto"]) for r in rows] == [("a", "True"), ("b", "False")]
