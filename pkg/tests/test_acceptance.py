"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal even when output capture is on.
"""

from __future__ import annotations

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from _oracles import brute_predict, brute_tree, dominated_oracle, tree_mismatch
from conftest import synth_pipeline
from mexpower.cli import run
from mexpower.config import default_feature_subset, default_min_leaf
from mexpower.evaluation import (
    ParetoPoint, armse, baseline_armse, estimate_time, pareto_front, rmse_per_target,
    timed_training,
)
from mexpower.features import (
    dmop_time_since, dmop_vocabulary, energy_influx, ftl_proportions, surfaces_from_saa,
    umbra_series,
)
from mexpower.ingest import MINUTE_MS, build_grid, interpolate, make_log, resample_targets
from mexpower.learners import (
    induce_pct, predict_forest, rank_features, staged_predict, train_gbt, train_method,
    train_random_forest,
)
from mexpower.learners.importance import tree_importance
from mexpower.synthgen import planted_feature_names

M = MINUTE_MS


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail=""):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report


def random_dataset(rng):
    n = int(rng.integers(2, 31))
    p = int(rng.integers(1, 5))
    t = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        X = rng.integers(0, int(rng.integers(2, 6)), size=(n, p)).astype(float)
    else:
        X = np.round(rng.normal(size=(n, p)), 3)
    return X, rng.normal(size=(n, t))


def test_criterion_1_split_oracle(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    failures = []
    for i in range(200):
        X, Y = random_dataset(rng)
        diff = tree_mismatch(induce_pct(X, Y), brute_tree(X, Y))
        if diff:
            failures.append((i, diff))
    elapsed = time.perf_counter() - start
    verdict(1, not failures and elapsed < 30,
            f"{200 - len(failures)}/200 trees match, {elapsed:.1f} s"
            + (f"; first mismatch {failures[0]}" if failures else ""))


def test_criterion_2_degenerate_forest(verdict):
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(50):
        X, Y = random_dataset(rng)
        forest = train_random_forest(X, Y, n_trees=1, bootstrap=False, seed=int(rng.integers(1000)))
        Xq = np.vstack([X, rng.normal(size=(5, X.shape[1]))])
        if not np.array_equal(predict_forest(forest, Xq), induce_pct(X, Y).predict(Xq)):
            bad += 1
    verdict(2, bad == 0, f"{50 - bad}/50 identical")


def _planted_ranks(seed, tmp):
    s = synth_pipeline(tmp, seed=seed)
    p = len(s.ds.feature_names)
    bundle = train_method("grf", s.train.X, s.train.Y, s.ds.feature_names, s.ds.target_names,
                          s.ds.digest(), n_trees=50, f=default_feature_subset(p),
                          m_leaf=default_min_leaf(15), seed=seed)
    order = [n for n, _ in rank_features(bundle.importance(), s.ds.feature_names)]
    groups = planted_feature_names(s.answer, s.manifest.horizons)
    ranks = [min(order.index(n) + 1 for n in g if n in order) for g in groups]
    return ranks, math.ceil(p / 4)


def test_criterion_3_genie3(verdict, tmp_path):
    # dyadic targets keep every variance exact in binary floating point
    X = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
    y = np.array([1.0, 1.5, 5.0, 5.5])
    tree = induce_pct(X, y, max_depth=1)
    h_star = float(np.var(y) - (2 * np.var(y[:2]) + 2 * np.var(y[2:])) / 4)
    exact = (tree_importance(tree, 2).tolist() == [h_star * 4, 0.0]
             and tree.gain[0] * tree.count[0] == h_star * 4)
    details, ok = [], exact
    for seed in range(5):
        ranks, q = _planted_ranks(seed, tmp_path / f"s{seed}")
        ok &= max(ranks) <= q
        details.append(f"seed {seed} ranks {ranks} <= {q}")
    verdict(3, ok, f"one-split exact={exact}; " + "; ".join(details))


def test_criterion_4_boosting(verdict):
    rng = np.random.default_rng(11)
    X = rng.normal(size=(150, 4))
    y = np.sin(2 * X[:, 0]) + X[:, 1] * X[:, 2] + 0.1 * rng.normal(size=150)
    model = train_gbt(X, y, n_rounds=50, eta=1.0, row_fraction=1.0, col_fraction=1.0,
                      early_stop_rounds=None)
    errors = [math.sqrt(np.mean((y - p) ** 2))
              for p in staged_predict(model, X, range(51)).values()]
    monotone = all(b <= a for a, b in zip(errors, errors[1:]))
    zero = train_gbt(X, y, n_rounds=0, early_stop_rounds=None)
    mean_ok = bool(np.all(zero.predict(X) == y.mean()))
    Xs, ys = X[:40], y[:40]
    one = train_gbt(Xs, ys, n_rounds=1, eta=1.0, row_fraction=1.0, col_fraction=1.0,
                    early_stop_rounds=None, max_depth=11)
    oracle = brute_tree(Xs, (ys - ys.mean())[:, None], max_depth=11)
    expected = ys.mean() + np.array([brute_predict(oracle, x)[0] for x in Xs])
    round1 = bool(np.allclose(one.predict(Xs), expected, rtol=1e-12, atol=1e-12))
    verdict(4, monotone and mean_ok and round1,
            f"monotone={monotone} (rmse {errors[0]:.3g} -> {errors[-1]:.3g}), "
            f"M=0 mean={mean_ok}, round-1 oracle={round1}")


def test_criterion_5_feature_formulas(verdict):
    # influx against the integral of A_eff(alpha(t)) for an always-lit sinusoid
    def alpha(x):
        return 45.0 + 40.0 * np.sin(2 * np.pi * x / 100.0)
    t = np.arange(301)
    a = alpha(t)
    saa = make_log("SAA", t * M, np.column_stack([a, a, a, a]))
    grid = build_grid(0, 300 * M, 15)
    v = energy_influx(surfaces_from_saa(saa), 1.0, umbra_series(None), grid).values[:, 0]
    ref = np.array([quad(lambda x: math.cos(math.radians(alpha(x))), s / M, e / M,
                         epsabs=1e-12, epsrel=1e-12)[0]
                    for s, e in zip(grid.starts, grid.starts + grid.lengths)])
    rel = float(np.max(np.abs(v - ref) / ref))
    influx_ok = rel < 0.01

    g = build_grid(0, 14 * 15 * M, 15)
    log = make_log("DMOP", [g.starts[1] + 7 * M], [["ASXX383C"]])
    col = dmop_time_since(log, dmop_vocabulary(log), g, 1440).column("tsla_cmd_ASXX383C")
    long = build_grid(0, 200 * 15 * M, 15)
    capped = dmop_time_since(log, dmop_vocabulary(log), long, 1440).column("tsla_cmd_ASXX383C")
    table_ok = (col[[0, 1, 2, 13]].tolist() == [1440, 0, 15, 12 * 15] and capped[-1] == 1440
                and capped.max() == 1440)

    fg = build_grid(0, 20 * M, 10)
    ftl = make_log("FTL", [5 * M, 0], [["EARTH"], ["MARS"]], ends=[20 * M, 3 * M])
    vals = ftl_proportions(ftl, fg).values
    ftl_ok = vals[0, 0] == 0.5 and bool(np.all((vals >= 0) & (vals <= 1)))
    verdict(5, influx_ok and table_ok and ftl_ok,
            f"influx max rel err {rel:.2e}, tsla pattern={table_ok}, ftl half={ftl_ok}")


def test_criterion_6_missing_rules(verdict):
    t = np.array([0, 5, 10, 15, 20, 25, 30, 35, 50, 55, 60])
    ts = resample_targets(make_log("POWER", t * M, np.ones((t.size, 1))), build_grid(0, 60 * M, 30))
    dropped = ts.missing.tolist() == [False, True]
    at_limit = resample_targets(make_log("POWER", np.array([0, 10, 20, 30]) * M, np.ones((4, 1))),
                                build_grid(0, 30 * M, 30)).missing.tolist() == [False]
    mid = interpolate(np.array([0, 8 * M]), np.array([0.1, 0.7]), [4 * M])[0, 0]
    midpoint = mid == (0.1 + 0.7) / 2
    quarter = interpolate(np.array([0, 8 * M]), np.array([0.0, 8.0]), [2 * M])[0, 0] == 2.0
    long_gap = bool(np.isnan(interpolate(np.array([0, 11 * M]), np.array([0.0, 1.0]), [5 * M])[0, 0]))
    verdict(6, dropped and at_limit and midpoint and quarter and long_gap,
            f"gap>10 drops={dropped}, gap=10 kept={at_limit}, midpoint exact={midpoint}, "
            f"linear={quarter}, context gap>10 NaN={long_gap}")


def test_criterion_7_end_to_end(verdict, tmp_path):
    start = time.perf_counter()
    s = synth_pipeline(tmp_path, delta_t=15, duration_days=30, seed=0)
    p = len(s.ds.feature_names)
    base = baseline_armse(s.train.Y, s.test.Y)
    ratios = {}
    for method in ("lrf", "grf", "xgb"):
        bundle = train_method(method, s.train.X, s.train.Y, s.ds.feature_names,
                              s.ds.target_names, s.ds.digest(), n_trees=50, n_rounds=50,
                              f=default_feature_subset(p), m_leaf=default_min_leaf(15), seed=0)
        err = armse(rmse_per_target(s.test.Y, bundle.predict(s.test.X)))
        ratios[method] = err / base
    elapsed = time.perf_counter() - start
    ok = all(r <= 0.5 for r in ratios.values()) and elapsed < 300
    verdict(7, ok, ", ".join(f"{m} {r:.3f}x baseline" for m, r in ratios.items())
            + f", {elapsed:.0f} s")


def test_criterion_8_pareto(verdict):
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(0, 30))
        coarse = rng.random() < 0.5
        vals = rng.integers(0, 5, size=(n, 2)) if coarse else rng.random(size=(n, 2))
        pts = [ParetoPoint(f"p{i}", float(a), float(b)) for i, (a, b) in enumerate(vals)]
        if sorted(p.label for p in pareto_front(pts)) != sorted(pts[i].label
                                                               for i in dominated_oracle(pts)):
            bad += 1
    verdict(8, bad == 0, f"{1000 - bad}/1000 fronts equal the oracle")


def _cli_run(root: Path, threads: int) -> dict[str, bytes]:
    base = ["--run-dir", str(root)]
    flags = ["--threads", str(threads), "--n-trees", "6", "--n-rounds", "6", "--seed", "4"]
    for step in (["synth", "--days", "3", "--seed", "4"], ["ingest"],
                 ["featurize", "--boundary", "midpoint"], ["split", "--boundary", "midpoint"]):
        assert run([step[0], *base, *step[1:]]) == 0
    for method in ("lrf", "grf", "xgb", "eoe"):
        for cmd in ("train", "evaluate", "importance"):
            assert run([cmd, *base, "--method", method, *flags]) == 0
    assert run(["curve", *base, "--method", "grf", "--sizes", "1,3", "--folds", "2", *flags]) == 0
    files = sorted(list((root / "models").glob("*.json")) + list((root / "reports").glob("*.json")))
    return {f.name: f.read_bytes() for f in files if not f.name.endswith(".meta.json")}


def test_criterion_9_determinism(verdict, tmp_path):
    one = _cli_run(tmp_path / "t1", 1)
    eight = _cli_run(tmp_path / "t8", 8)
    differing = sorted(k for k in one if one[k] != eight.get(k))
    ok = set(one) == set(eight) and not differing and len(one) >= 12
    verdict(9, ok, f"{len(one)} model/report files compared, differing: {differing or 'none'}")


def _real_data_check():
    """aRMSE against the published values when the ESA challenge data is supplied."""
    root = os.environ.get("MEX_DATA_DIR")
    if not root:
        return None, "real data: skipped (MEX_DATA_DIR not set)"
    from mexpower.dataset import assemble_dataset, split_by_date
    from mexpower.features import featurize
    from mexpower.ingest import GAP_LIMIT_MS, StreamKind, grid_for_logs
    from mexpower.cli import _load_logs, parse_boundary

    logs = _load_logs(Path(root))
    fine = grid_for_logs([logs[StreamKind.POWER]], 1)
    rows_1 = int((~resample_targets(logs[StreamKind.POWER], fine, GAP_LIMIT_MS).missing).sum())
    grid = grid_for_logs([logs[StreamKind.POWER]], 15)
    boundary = parse_boundary("2014-04-14")
    block, _ = featurize(logs, grid, boundary)
    ds = assemble_dataset(block, resample_targets(logs[StreamKind.POWER], grid, GAP_LIMIT_MS))
    train, test = split_by_date(ds, boundary)
    p = len(ds.feature_names)
    got = {}
    for method in ("xgb", "lrf"):
        b = train_method(method, train.X, train.Y, ds.feature_names, ds.target_names, ds.digest(),
                         n_trees=50, n_rounds=50, f=default_feature_subset(p),
                         m_leaf=default_min_leaf(15))
        got[method] = armse(rmse_per_target(test.Y, b.predict(test.X)))
    ok = (abs(got["xgb"] / 0.0785 - 1) <= 0.1 and abs(got["lrf"] / 0.0808 - 1) <= 0.1
          and rows_1 == 3922895)
    return ok, f"real data: xgb {got['xgb']:.4f}, lrf {got['lrf']:.4f}, rows@1min {rows_1}"


def test_criterion_10_timing_contract(verdict, tmp_path):
    exact = (estimate_time(3.0, 0.25).t == 12.0 and estimate_time(0.7, 1.0).t == 0.7
             and estimate_time(1.5, 0.1).t == 1.5 / 0.1)
    times = {}
    for dt in (5, 15, 60):
        s = synth_pipeline(tmp_path / f"dt{dt}", delta_t=dt, duration_days=10, seed=1)
        runs = []
        for _ in range(3):
            _, est = timed_training("grf", s.ds.X, s.ds.Y, alpha=0.25, n_trees=20,
                                    m_leaf=default_min_leaf(dt))
            runs.append(est.t)
        times[dt] = float(np.median(runs))
    decreasing = times[5] > times[15] > times[60]
    real_ok, real_detail = _real_data_check()
    ok = exact and decreasing and real_ok is not False
    verdict(10, ok, f"estimator exact={exact}, t(5/15/60)="
            + "/".join(f"{times[d]:.3f}" for d in (5, 15, 60)) + f" s; {real_detail}")
