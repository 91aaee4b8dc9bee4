import csv
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from maxmag.simulation import (BOUNDED, METRICS, StudyConfig, TruncatedGRParams, _aggregate, _keys,
                               evaluate_replicate, replicate_seed, run_study, sample_truncated_gr,
                               write_report)

slow = pytest.mark.skipif(not os.environ.get("MAXMAG_SLOW"), reason="set MAXMAG_SLOW=1 to run")

CHEAP = ("truncated_pareto", "npos", "fl", "efl", "rw", "rwc", "ks")


def test_params_validation():
    with pytest.raises(ValueError):
        TruncatedGRParams(beta=0.0)
    with pytest.raises(ValueError):
        TruncatedGRParams(t_M=2.0, T_M=2.0)


def test_config_validation():
    for bad in (dict(replicates=0), dict(sample_size=9), dict(alpha=1.0), dict(k_grid=(250,))):
        with pytest.raises(ValueError):
            StudyConfig(**bad)
    assert StudyConfig(k_grid=(50, 25, 50)).k_grid == (25, 50)


def test_quantile_endpoints():
    p = TruncatedGRParams(2.1203, 1.5, 3.75)
    assert p.quantile(0.0) == 1.5
    assert p.quantile(1.0) == pytest.approx(3.75, abs=1e-12)
    assert p.quantile(1 - 1e-12) < 3.75
    u = np.linspace(0, 1, 101)
    assert np.allclose(p.cdf(p.quantile(u)), u, atol=1e-12)


@pytest.mark.parametrize("T,level", [(3.75, 99.2), (4.0, 99.5), (4.5, 99.8)])
def test_untruncated_quantile_levels(T, level):
    p = TruncatedGRParams(2.1203, 1.5, T)
    assert round(100 * p.untruncated_quantile_level(), 1) == level


def test_true_odds():
    p = TruncatedGRParams(2.0, 1.0, 3.0)
    assert p.true_odds() == pytest.approx(math.exp(-4) / (1 - math.exp(-4)), rel=1e-14)


def test_sampler_matches_analytic_cdf():
    p = TruncatedGRParams(2.1203, 1.5, 3.75)
    s = sample_truncated_gr(p, 1_000_000, 2017)
    d = stats.kstest(s.values, p.cdf).statistic
    assert d < 1.5 * 1.36 / 1000
    assert s.values[0] >= 1.5 and s.values[-1] <= 3.75
    assert np.all(np.diff(s.values) > 0)


def test_sampler_deterministic():
    p = TruncatedGRParams()
    a = sample_truncated_gr(p, 50, replicate_seed(7, 3))
    b = sample_truncated_gr(p, 50, replicate_seed(7, 3))
    c = sample_truncated_gr(p, 50, replicate_seed(7, 4))
    assert np.array_equal(a.values, b.values) and not np.array_equal(a.values, c.values)


def test_keys_follow_estimator_layout():
    cfg = StudyConfig(sample_size=100, k_grid=(10, 50))
    keys = _keys(cfg)
    assert ("truncated_gpd", 10) in keys and ("truncated_pareto", 50) in keys
    assert ("fl", 100) in keys and ("efl", 10) in keys
    assert ("rw", 2) in keys and ("rwc", 2) in keys
    for name in ("npg", "npos", "ks"):
        assert (name, 100) in keys
    assert len(keys) == len(set(keys))


def test_evaluate_replicate_covers_all_keys():
    cfg = StudyConfig(replicates=1, sample_size=60, k_grid=(20, 30))
    out = evaluate_replicate(cfg, 0)
    assert set(out) == set(_keys(cfg))
    for (name, _), (est, bnd) in out.items():
        # R-W carries its own bound, identical to the N-P-OS one
        assert math.isnan(bnd) or name in BOUNDED + ("rw",)
    assert out == evaluate_replicate(cfg, 0)
    rows = run_study(cfg).rows
    assert {r.estimator for r in rows if r.coverage is not None} == set(BOUNDED)


def test_single_replicate_exact_estimator():
    cfg = StudyConfig(replicates=1, sample_size=20, k_grid=(5,), estimators=("rw",))
    T = cfg.params.T_M
    rows = _aggregate(cfg, np.array([[T]]), np.array([[math.nan]]), [("rw", 2)])
    assert rows[0].relative_mean == 1.0 and rows[0].relative_mse == 0.0
    assert rows[0].used == 1 and rows[0].failure_count == 0


def test_single_replicate_study():
    cfg = StudyConfig(replicates=1, sample_size=40, k_grid=(10,), estimators=CHEAP)
    report = run_study(cfg)
    assert {r.estimator for r in report.rows} == set(CHEAP)
    for r in report.rows:
        assert r.used + r.failure_count == 1
        if r.coverage is not None and not math.isnan(r.coverage):
            assert r.coverage in (0.0, 1.0)


def test_aggregate_handles_failures_and_infinite_bounds():
    cfg = StudyConfig(replicates=4, sample_size=20, k_grid=(5,))
    T = cfg.params.T_M
    est = np.array([[T], [math.nan], [math.inf], [T + 1]])
    bnd = np.array([[math.inf], [math.nan], [T - 1], [T + 2]])
    (row,) = _aggregate(cfg, est, bnd, [("npos", 20)])
    assert row.used == 2 and row.failure_count == 2
    assert row.relative_mean == pytest.approx((2 * T + 1) / 2 / T)
    assert row.bound_used == 3 and row.coverage == pytest.approx(2 / 3)


values = st.one_of(st.floats(2.0, 6.0), st.just(math.nan), st.just(math.inf))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(values, values), min_size=1, max_size=30), st.randoms())
def test_aggregate_invariants_and_order_independence(pairs, rnd):
    R = len(pairs)
    cfg = StudyConfig(replicates=R, sample_size=20, k_grid=(5,))
    est = np.array([[e] for e, _ in pairs])
    bnd = np.array([[b] for _, b in pairs])
    (row,) = _aggregate(cfg, est, bnd, [("ks", 20)])
    assert row.used + row.failure_count == R
    if row.used:
        assert row.relative_mse >= 0
    if row.bound_used:
        assert 0.0 <= row.coverage <= 1.0
    perm = list(range(R))
    rnd.shuffle(perm)
    (again,) = _aggregate(cfg, est[perm], bnd[perm], [("ks", 20)])
    assert repr(again) == repr(row)


def test_report_identical_across_jobs(tmp_path):
    cfg = StudyConfig(replicates=6, sample_size=40, k_grid=(10, 20), estimators=CHEAP + ("truncated_gpd",))
    serial = run_study(cfg, jobs=1)
    parallel = run_study(cfg, jobs=2)
    assert repr(serial.rows) == repr(parallel.rows)
    a = write_report(serial, tmp_path / "a")
    b = write_report(parallel, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_write_report_layout(tmp_path):
    cfg = StudyConfig(replicates=2, sample_size=40, k_grid=(10,), estimators=("npos", "rw"))
    paths = write_report(run_study(cfg), tmp_path)
    assert [p.name for p in paths] == [f"{m}_T3.75.csv" for m in METRICS]
    with open(paths[2]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["estimator", "k", "T_M", "metric_value", "replicates_used"]
    assert [r[0] for r in rows[1:]] == ["npos"]
    with open(paths[0]) as fh:
        rows = list(csv.reader(fh))
    assert {r[0] for r in rows[1:]} == {"npos", "rw"}


def _mse_by_estimator(n, k, reps):
    cfg = StudyConfig(TruncatedGRParams(T_M=3.75), replicates=reps, sample_size=n, k_grid=(k,))
    report = run_study(cfg, jobs=os.cpu_count() or 1)
    return {(r.estimator, r.k if r.estimator not in ("fl", "efl") else None): r.relative_mse
            for r in report.rows if r.estimator not in ("fl", "efl") or r.k == n}


@pytest.mark.slow
@slow
def test_relative_mse_decreases_with_sample_size():
    small = _mse_by_estimator(250, 125, 1000)
    large = _mse_by_estimator(1000, 500, 1000)
    for (name, k), mse in small.items():
        other = next(v for (m, _), v in large.items() if m == name)
        assert other < 1.1 * mse, name
