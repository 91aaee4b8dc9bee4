import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxmag.catalog import MagnitudeSample, log_energy
from maxmag.diagnostics import (exponential_qq, exponential_quantiles, hill, hill_from_logs,
                                hill_path, mean_excess, pareto_qq)

finite = st.floats(1.5, 6.0, allow_nan=False)


def test_qq_needs_two_points():
    one = MagnitudeSample.from_values([2.0], 1.5)
    with pytest.raises(ValueError):
        exponential_qq(one)
    with pytest.raises(ValueError):
        pareto_qq(one)


def test_exponential_qq_on_exact_quantiles_is_a_line():
    beta = 2.1203
    q = exponential_quantiles(200)
    sample = MagnitudeSample.from_values(q / beta, 0.0)
    qq = exponential_qq(sample)
    slope, icpt = np.polyfit(qq.theoretical, qq.empirical, 1)
    assert np.max(np.abs(qq.empirical - (slope * qq.theoretical + icpt))) < 1e-12
    assert slope == pytest.approx(1 / beta, rel=1e-12)
    assert abs(icpt) < 1e-12


def test_pareto_qq_on_exact_pareto_energies_has_slope_xi():
    xi = 1.8
    q = exponential_quantiles(150)
    # magnitudes whose energies are exact Pareto(xi) quantiles with scale 2 MJ
    mags = 1.0 + xi * q / (1.5 * math.log(10))
    qq = pareto_qq(MagnitudeSample.from_values(mags, 1.0))
    slope, _ = np.polyfit(qq.theoretical, qq.empirical, 1)
    assert slope == pytest.approx(xi, rel=1e-10)
    assert np.allclose(qq.empirical, log_energy(mags))


def test_qq_points_strictly_increasing(gr_sample):
    for qq in (exponential_qq(gr_sample), pareto_qq(gr_sample)):
        pts = np.array(qq.points)
        assert np.all(np.diff(pts[:, 0]) > 0) and np.all(np.diff(pts[:, 1]) > 0)


def test_mean_excess_examples():
    me = mean_excess(MagnitudeSample.from_values([1.0, 2.0, 3.0], 1.0))
    assert me.entries == [(2, 1.0, 1.5)]
    const = mean_excess(MagnitudeSample.from_values([1.7] * 20, 1.5))
    assert np.all(const.mean_excess == 0.0)
    with pytest.raises(ValueError):
        mean_excess(MagnitudeSample.from_values([1.0, 2.0], 1.0))


def test_mean_excess_thresholds_are_order_statistics(gr_sample):
    me = mean_excess(gr_sample)
    x = gr_sample.values
    n = x.size
    assert np.array_equal(me.threshold, x[n - me.k - 1])
    k = 40
    direct = np.mean(x[n - k:] - x[n - k - 1])
    assert me.mean_excess[k - 2] == pytest.approx(direct, rel=1e-13)


def test_mean_excess_of_exponential_data():
    beta = 2.1203
    rng = np.random.default_rng(77)
    x = 1.5 + rng.exponential(1 / beta, size=10_000)
    me = mean_excess(MagnitudeSample.from_values(x, 1.5))
    k = 2000
    se = (1 / beta) / math.sqrt(k)
    assert abs(me.mean_excess[k - 2] - 1 / beta) < 3 * se


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=3, max_size=40), st.floats(-1.0, 1.0), st.floats(0.2, 5.0))
def test_mean_excess_shift_and_scale(vals, c, s):
    x = np.array(vals)
    base = mean_excess(MagnitudeSample.from_values(x, x.min())).mean_excess
    shifted = mean_excess(MagnitudeSample.from_values(x + c, x.min() + c)).mean_excess
    scaled = mean_excess(MagnitudeSample.from_values(x * s, x.min() * s)).mean_excess
    assert np.allclose(shifted, base, atol=1e-12)
    assert np.allclose(scaled, s * base, atol=1e-12, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=3, max_size=40), st.permutations(range(3)))
def test_diagnostics_ignore_input_order(vals, _):
    x = np.array(vals)
    rng = np.random.default_rng(len(vals))
    y = rng.permutation(x)
    a, b = MagnitudeSample.from_values(x, x.min()), MagnitudeSample.from_values(y, x.min())
    assert exponential_qq(a).points == exponential_qq(b).points
    assert mean_excess(a).entries == mean_excess(b).entries


def test_hill_examples():
    assert hill([1.0, math.e, math.e ** 2], 1) == pytest.approx(1.0, rel=1e-15)
    assert hill([3.0] * 10, 4) == 0.0
    with pytest.raises(ValueError):
        hill([1.0, -2.0, 3.0], 1)
    with pytest.raises(ValueError):
        hill([1.0, 2.0], 2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=2, max_size=50), st.integers(-20, 20))
def test_hill_scale_invariant_exactly(vals, power):
    # scaling by a power of two is exact in floating point, so H is unchanged bit for bit
    x = np.array(vals)
    c = 2.0 ** power
    for k in range(1, x.size):
        assert hill(c * x, k) == hill(x, k)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=2, max_size=50), st.floats(0.001, 1000.0))
def test_hill_scale_invariant(vals, c):
    x = np.array(vals)
    k = x.size - 1
    assert hill(c * x, k) == pytest.approx(hill(x, k), abs=1e-10)


def test_hill_on_pareto_draws():
    xi = 1.8
    rng = np.random.default_rng(2024)
    x = rng.pareto(1 / xi, size=1_000_000) + 1.0
    k = 1000
    assert abs(hill(x, k) - xi) < 3 * xi / math.sqrt(k)


def test_hill_path_matches_pointwise(gr_sample):
    logs = gr_sample.log_energies()
    path = hill_path(logs)
    for k in (1, 10, 125, 249):
        assert path[k - 1] == pytest.approx(hill_from_logs(logs, k), rel=1e-12)
