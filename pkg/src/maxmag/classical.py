"""Non-parametric and Gutenberg-Richter based endpoint estimators and bounds.

All estimators take the ordered magnitudes of a :class:`MagnitudeSample`
and return values on the magnitude scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .catalog import MagnitudeSample
from .expint import exp_integral_e1_scaled
from .results import (DEGENERATE_SPACING, INFINITE_PARAMETRIC_BOUND,
                      EndpointResult, EstimationError)


@dataclass(frozen=True)
class NPConfig:
    nu: float = 1.0
    bandwidth: float | None = None
    quadrature_points: int = 512
    max_iter: int = 200
    tol: float = 1e-5
    bandwidth_grid: int = 50

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class GRFit:
    beta: float
    beta0: float
    t_M: float
    T_M_current: float


def _values(sample: MagnitudeSample, min_n: int, name: str) -> np.ndarray:
    x = np.asarray(sample.values)
    if x.size < min_n:
        raise ValueError(f"{name} needs at least {min_n} observations, got {x.size}")
    return x


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


# -- order statistic estimators --------------------------------------------------

def npos_endpoint(sample: MagnitudeSample) -> EndpointResult:
    x = _values(sample, 2, "N-P-OS")
    n = x.size
    top = x[::-1]  # M_{n-i,n} for i = 0..n-1
    weights = np.exp(-np.arange(n, dtype=float))
    weighted = math.fsum((weights * top).tolist())
    delta = top[0] - (-math.expm1(-1.0)) * weighted
    raw = top[0] + delta
    return EndpointResult("npos", n, raw, raw)


def npos_upper_bound(sample: MagnitudeSample, alpha: float, config: NPConfig | None = None) -> float:
    _check_alpha(alpha)
    nu = (config or NPConfig()).nu
    x = _values(sample, 2, "N-P-OS bound")
    # nu = 1 is written exactly like the R-W bound so the two agree bit for bit
    factor = (1.0 - alpha) / alpha if nu == 1.0 else 1.0 / ((1.0 - alpha) ** (-nu) - 1.0)
    return float(x[-1] + factor * (x[-1] - x[-2]))


def npos_estimate(sample: MagnitudeSample, alpha: float | None = None,
                  config: NPConfig | None = None) -> EndpointResult:
    res = npos_endpoint(sample)
    if alpha is not None:
        flag = DEGENERATE_SPACING if sample.values[-1] == sample.values[-2] else None
        res = res.with_bound(npos_upper_bound(sample, alpha, config), alpha, flag)
    return res


def fl_endpoint(sample: MagnitudeSample, k: int) -> EndpointResult:
    x = _values(sample, 1, "FL")
    n = x.size
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    raw = x[-1] + (x[-1] - x[n - k]) / k
    return EndpointResult("fl", k, float(raw), float(raw))


def efl_endpoint(sample: MagnitudeSample, k: int) -> EndpointResult:
    x = _values(sample, 2, "EFL")
    n = x.size
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    mean_below = math.fsum(x[n - k:n - 1].tolist()) / (k - 1)
    raw = x[-1] + (x[-1] - mean_below) / k
    return EndpointResult("efl", k, float(raw), float(raw))


def rw_endpoint(sample: MagnitudeSample) -> EndpointResult:
    x = _values(sample, 2, "R-W")
    raw = 2.0 * x[-1] - x[-2]
    return EndpointResult("rw", 2, float(raw), float(raw))


def rw_upper_bound(sample: MagnitudeSample, alpha: float) -> float:
    _check_alpha(alpha)
    x = _values(sample, 2, "R-W bound")
    return float(x[-1] + (1.0 - alpha) / alpha * (x[-1] - x[-2]))


def rwc_endpoint(sample: MagnitudeSample, config: NPConfig | None = None) -> EndpointResult:
    nu = (config or NPConfig()).nu
    x = _values(sample, 2, "R-W-C")
    raw = x[-1] + (x[-1] - x[-2]) / (2.0 * nu)
    return EndpointResult("rwc", 2, float(raw), float(raw))


# -- non-parametric Gaussian kernel -----------------------------------------------

def lscv_score(x: np.ndarray, h: float, pair_dist: np.ndarray | None = None) -> float:
    """Least-squares cross-validation score of a Gaussian KDE with bandwidth h.

    ``pair_dist`` are the sorted |x_i - x_j|, i < j; passing them in avoids
    recomputation across a bandwidth grid.
    """
    n = x.size
    if pair_dist is None:
        pair_dist = _pair_distances(x)
    cut = np.searchsorted(pair_dist, 12.0 * h)
    d = pair_dist[:cut] / h
    # integral of fhat^2: N(0, 2) kernel on all ordered pairs incl. i = j
    int_sq = (n / math.sqrt(2.0) + 2.0 * float(np.sum(np.exp(-0.25 * d * d))) / math.sqrt(2.0))
    int_sq /= n * n * h * math.sqrt(2.0 * math.pi)
    loo = 2.0 * float(np.sum(np.exp(-0.5 * d * d))) / (n * (n - 1) * h * math.sqrt(2.0 * math.pi))
    return int_sq - 2.0 * loo


def _pair_distances(x: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(x.size, k=1)
    return np.sort(np.abs(x[i] - x[j]))


def bandwidth_grid(x: np.ndarray, size: int = 50) -> np.ndarray:
    s = float(np.std(x, ddof=1))
    base = s * x.size ** (-0.2)
    if not base > 0:
        raise EstimationError("bandwidth grid is degenerate (zero spread)")
    return np.geomspace(0.1 * base, 10.0 * base, size)


def lscv_bandwidth(x: np.ndarray, size: int = 50) -> float:
    """Grid minimiser of the least-squares cross-validation score."""
    grid = bandwidth_grid(x, size)
    pd = _pair_distances(x)
    scores = np.array([lscv_score(x, h, pd) for h in grid])
    if not np.all(np.isfinite(scores)):
        raise EstimationError("non-finite cross-validation scores")
    return float(grid[int(np.argmin(scores))])


def _gl_panels(a: float, b: float, n_nodes: int, n_panels: int = 16):
    """Gauss-Legendre nodes/weights on [a, b], panels halving in width towards b."""
    per = max(n_nodes // n_panels, 2)
    gx, gw = np.polynomial.legendre.leggauss(per)
    edges = [a]
    width = b - a
    for j in range(1, n_panels):
        edges.append(b - width * 0.5 ** j)
    edges.append(b)
    edges = np.asarray(edges)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _log_kernel_cdf_ratio(m: np.ndarray, x: np.ndarray, h: float, t_M: float, T: float) -> np.ndarray:
    """ln of the kernel CDF renormalised to [t_M, T], evaluated at m."""
    base = ndtr((t_M - x) / h).sum()
    top = ndtr((T - x) / h).sum() - base
    num = ndtr((m[:, None] - x[None, :]) / h).sum(axis=1) - base
    with np.errstate(divide="ignore"):
        return np.log(np.clip(num, 0.0, None)) - math.log(top)


def npg_delta(sample: MagnitudeSample, T: float, h: float, n_nodes: int = 512) -> float:
    """Integral over [t_M, T] of the n-th power of the renormalised kernel CDF."""
    x = np.asarray(sample.values)
    n = x.size
    t_M = sample.t_M
    if T <= t_M:
        return 0.0
    # the integrand is increasing; skip the range where it is below exp(-45)
    lo, hi = t_M, T
    f = lambda m: n * _log_kernel_cdf_ratio(np.array([m]), x, h, t_M, T)[0]  # noqa: E731
    if f(lo) < -45.0:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if f(mid) < -45.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-3 * (T - t_M):
                break
    nodes, weights = _gl_panels(lo, T, n_nodes)
    vals = np.exp(n * _log_kernel_cdf_ratio(nodes, x, h, t_M, T))
    return float(np.dot(weights, vals))


def _npg_gap(sample: MagnitudeSample, T: float, h: float, n_nodes: int) -> float:
    return float(sample.values[-1]) + npg_delta(sample, T, h, n_nodes) - T


def _npg_far(sample: MagnitudeSample, h: float) -> float:
    return float(sample.values[-1]) + 10.0 * h + 1.0


def npg_has_root(sample: MagnitudeSample, h: float, n_nodes: int = 512) -> bool:
    """Cheap existence check for the N-P-G fixed point at bandwidth h.

    g(T) = M_n + delta(T) - T is positive at T = M_n; a root exists if g has
    turned negative by T = M_n + 10 h + 1. For very small h the kernel CDF
    saturates above the data and g never changes sign.
    """
    return _npg_gap(sample, _npg_far(sample, h), h, n_nodes) < 0.0


def _npg_solve(sample: MagnitudeSample, h: float, config: NPConfig) -> float:
    # the fixed point T = M_n + delta(T) is bracketed by [M_n, far]
    lo, hi = float(sample.values[-1]), _npg_far(sample, h)
    g = lambda T: _npg_gap(sample, T, h, config.quadrature_points)  # noqa: E731
    if not g(hi) < 0.0:
        raise EstimationError("N-P-G fixed point does not exist at this bandwidth", bandwidth=h)
    if not g(lo) > 0.0:
        return lo
    return float(brentq(g, lo, hi, xtol=config.tol, maxiter=config.max_iter))


def npg_endpoint(sample: MagnitudeSample, config: NPConfig | None = None) -> EndpointResult:
    """Kernel-smoothed endpoint; ``scale`` on the result holds the bandwidth used.

    Without a fixed bandwidth the cross-validation minimiser is tried first;
    if the fixed point does not exist there the grid is walked upwards to the
    first bandwidth where it does (flagged ``bandwidth_increased``).
    """
    config = config or NPConfig()
    x = _values(sample, 10, "N-P-G")
    if config.bandwidth is not None:
        T = _npg_solve(sample, config.bandwidth, config)
        return EndpointResult("npg", x.size, T, T, scale=config.bandwidth)
    grid = bandwidth_grid(x, config.bandwidth_grid)
    pd = _pair_distances(x)
    scores = np.array([lscv_score(x, h, pd) for h in grid])
    if not np.all(np.isfinite(scores)):
        raise EstimationError("non-finite cross-validation scores")
    start = int(np.argmin(scores))
    last_error = None
    for i in range(start, grid.size):
        h = float(grid[i])
        try:
            T = _npg_solve(sample, h, config)
        except EstimationError as exc:
            last_error = exc
            continue
        flags = ("bandwidth_increased",) if i > start else ()
        return EndpointResult("npg", x.size, T, T, scale=h, flags=flags)
    raise EstimationError("N-P-G fixed point not found on the bandwidth grid",
                          lscv_bandwidth=float(grid[start]), last_error=str(last_error))


# -- Kijko-Sellevoll ------------------------------------------------------------------

def ks_beta(sample: MagnitudeSample, T_M_current: float) -> GRFit:
    """Aki-Utsu rate with the first-order correction for upper truncation at T."""
    x = np.asarray(sample.values)
    t_M = sample.t_M
    excess = float(np.mean(x)) - t_M
    if not excess > 0:
        raise EstimationError("sample mean does not exceed t_M; beta undefined")
    beta0 = 1.0 / excess
    if math.isinf(T_M_current):
        return GRFit(beta0, beta0, t_M, T_M_current)
    u = beta0 * (T_M_current - t_M)
    # u e^{-u} / (1 - e^{-u}), written to avoid overflow for large u
    corr = u * math.exp(-u) / -math.expm1(-u) if u > 0 else 1.0
    return GRFit(beta0 * (1.0 - corr), beta0, t_M, T_M_current)


def ks_step(sample: MagnitudeSample, T: float) -> tuple[float, float]:
    """One update (beta, T_new) of the Kijko-Sellevoll fixed point."""
    x = np.asarray(sample.values)
    n = x.size
    t_M = sample.t_M
    beta = ks_beta(sample, T).beta
    if not beta > 0:
        raise EstimationError("non-positive beta in Kijko-Sellevoll iteration", beta=beta, T=T)
    u = beta * (T - t_M)
    n1 = n / (-math.expm1(-u))
    n2 = n1 * math.exp(-u)
    # (E1(n2) - E1(n1)) e^{n2}, using n1 - n2 = n
    diff = exp_integral_e1_scaled(n2) - exp_integral_e1_scaled(n1) * math.exp(-(n1 - n2))
    T_new = float(x[-1]) + diff / beta + t_M * math.exp(-n)
    return beta, T_new


def ks_endpoint(sample: MagnitudeSample, tol: float = 1e-5, max_iter: int = 200,
                ceiling: float | None = None) -> EndpointResult:
    x = _values(sample, 10, "K-S")
    t_M = sample.t_M
    ceiling = t_M + 20.0 if ceiling is None else ceiling
    T = float(x[-1])
    trace = [T]
    for _ in range(max_iter):
        beta, T_new = ks_step(sample, T)
        trace.append(T_new)
        if not math.isfinite(T_new) or T_new > ceiling:
            raise EstimationError("Kijko-Sellevoll iteration diverged", trace=trace)
        if abs(T_new - T) < tol:
            beta = ks_beta(sample, T_new).beta
            return EndpointResult("ks", x.size, T_new, T_new, scale=beta)
        T = T_new
    raise EstimationError("Kijko-Sellevoll iteration did not converge", trace=trace)


def pisarenko_alpha_threshold(sample: MagnitudeSample, beta: float) -> float:
    """Largest alpha for which the parametric bound is infinite."""
    x = np.asarray(sample.values)
    n = x.size
    return float(math.exp(n * math.log(-math.expm1(-beta * (x[-1] - sample.t_M)))))


def pisarenko_upper_bound(sample: MagnitudeSample, beta: float, alpha: float) -> float:
    """Parametric truncated-GR upper bound; +inf when alpha is at or below the threshold."""
    _check_alpha(alpha)
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = np.asarray(sample.values)
    n = x.size
    t_M = sample.t_M
    # arg = 1 - (1 - exp(-beta (M_n - t))) / alpha^(1/n)
    arg = 1.0 + math.expm1(-beta * (x[-1] - t_M)) * math.exp(-math.log(alpha) / n)
    if arg <= 0.0:
        return math.inf
    return t_M - math.log(arg) / beta


def ks_estimate(sample: MagnitudeSample, alpha: float | None = None, tol: float = 1e-5,
                max_iter: int = 200) -> EndpointResult:
    res = ks_endpoint(sample, tol=tol, max_iter=max_iter)
    if alpha is not None:
        ub = pisarenko_upper_bound(sample, res.scale, alpha)
        res = res.with_bound(ub, alpha, INFINITE_PARAMETRIC_BOUND if math.isinf(ub) else None)
    return res
