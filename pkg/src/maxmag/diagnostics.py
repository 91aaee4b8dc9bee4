"""QQ coordinates, mean excess values and the Hill statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import MagnitudeSample, log_energy


@dataclass(frozen=True)
class QQPlotData:
    kind: str  # "exponential" or "pareto"
    theoretical: np.ndarray
    empirical: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.theoretical.tolist(), self.empirical.tolist()))


@dataclass(frozen=True)
class MeanExcessData:
    k: np.ndarray
    threshold: np.ndarray
    mean_excess: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float, float]]:
        return list(zip(self.k.tolist(), self.threshold.tolist(), self.mean_excess.tolist()))


def _ordered(sample) -> np.ndarray:
    if isinstance(sample, MagnitudeSample):
        return np.asarray(sample.values)
    return np.sort(np.asarray(sample, dtype=float))


def exponential_quantiles(n: int) -> np.ndarray:
    """-ln(1 - i/(n+1)) for i = 1..n."""
    i = np.arange(1, n + 1)
    return -np.log1p(-i / (n + 1.0))


def exponential_qq(sample) -> QQPlotData:
    x = _ordered(sample)
    if x.size < 2:
        raise ValueError("exponential QQ-plot needs at least 2 observations")
    return QQPlotData("exponential", exponential_quantiles(x.size), x)


def pareto_qq(sample) -> QQPlotData:
    """Exponential quantiles against log-energies of the magnitudes."""
    x = _ordered(sample)
    if x.size < 2:
        raise ValueError("Pareto QQ-plot needs at least 2 observations")
    return QQPlotData("pareto", exponential_quantiles(x.size), log_energy(x))


def mean_excess(sample) -> MeanExcessData:
    """Mean excess over M_{n-k,n} of the k largest values, k = 2..n-1."""
    x = _ordered(sample)
    n = x.size
    if n < 3:
        raise ValueError("mean excess needs at least 3 observations")
    k = np.arange(2, n)
    # shift-invariant, so work relative to the maximum (exact zeros for ties)
    y = x - x[-1]
    top_sums = np.cumsum(y[::-1])  # top_sums[k-1] = sum of the k largest
    thresholds = x[n - k - 1]
    me = top_sums[k - 1] / k - y[n - k - 1]
    return MeanExcessData(k, thresholds, me)


def hill_from_logs(log_values: np.ndarray, k: int) -> float:
    """Hill statistic from ascending log-values; lets callers stay in log space."""
    n = log_values.size
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    return float(np.mean(log_values[n - k:]) - log_values[n - k - 1])


def hill(values, k: int) -> float:
    """H_{k,n}: mean log-spacing of the k largest values over X_{n-k,n}."""
    x = np.sort(np.asarray(values, dtype=float))
    if np.any(x <= 0):
        raise ValueError("Hill statistic requires positive values")
    n = x.size
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    # log of ratios: exact invariance under scaling by powers of two
    return float(np.mean(np.log(x[n - k:] / x[n - k - 1])))


def hill_path(log_values: np.ndarray) -> np.ndarray:
    """Hill statistics for k = 1..n-1 from ascending log-values (index k-1)."""
    n = log_values.size
    k = np.arange(1, n)
    top = np.cumsum(log_values[::-1])[:-1]
    return top / k - log_values[n - k - 1]
