"""Endpoint estimation for tails affected by truncation.

Two routes: a right-truncated GPD fitted by maximum likelihood to the
magnitude excesses over M_{n-k,n}, and a truncated Pareto fit of the
released energies whose endpoint is mapped back to the magnitude scale.
Both come with truncation-odds estimates, a test for truncation and an
asymptotic upper confidence bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .catalog import MagnitudeSample, log_energy_to_magnitude, ENERGY_SLOPE
from .diagnostics import hill_from_logs
from .results import (INFINITE_BOUND, EndpointResult, EstimationError,
                      clamp_result)

XI_ZERO = 1e-6
XI_MIN = -1.0  # likelihood is unbounded for xi <= -1
XI_MAX = 20.0
ROOT_TOL = 1e-8
MIN_K_GPD = 4
MIN_K_PARETO = 2
_LN10 = math.log(10.0)
_STARTS = (0.0, 0.25, -0.25, 0.6, -0.6)


def _log1p_div(xi: float, z):
    """log1p(xi*z)/xi, continuous through xi = 0 (value z)."""
    y = xi * z
    if np.max(np.abs(y)) < 1e-4:
        return z * (1.0 - y * (0.5 - y * (1.0 / 3.0 - 0.25 * y)))
    return np.log1p(y) / xi


def _expm1_div(xi: float, x: float) -> float:
    """expm1(xi*x)/xi, continuous through xi = 0 (value x)."""
    y = xi * x
    if abs(y) < 1e-5:
        return x * (1.0 + y * (0.5 + y / 6.0))
    return math.expm1(y) / xi


def _ordered(sample) -> np.ndarray:
    if isinstance(sample, MagnitudeSample):
        return np.asarray(sample.values)
    return np.sort(np.asarray(sample, dtype=float))


def _excesses(x: np.ndarray, k: int, min_k: int) -> tuple[float, np.ndarray]:
    n = x.size
    if not min_k <= k <= n - 1:
        raise ValueError(f"k must be in [{min_k}, {n - 1}], got {k}")
    threshold = float(x[n - k - 1])
    return threshold, x[n - k:] - threshold


# -- truncated GPD -----------------------------------------------------------

def gpd_negloglik(params, excesses: np.ndarray, truncated: bool = True) -> float:
    """Negative log-likelihood of excesses under a GPD in (xi, ln sigma).

    With ``truncated`` the GPD is right-truncated at the largest excess.
    Returns +inf outside the parameter space.
    """
    xi, s = float(params[0]), float(params[1])
    if not XI_MIN < xi <= XI_MAX or not -50.0 < s < 50.0:
        return math.inf
    z = excesses * math.exp(-s)
    zmax = z.max()
    if 1.0 + xi * zmax <= 0.0:
        return math.inf
    lz = _log1p_div(xi, z)
    nll = excesses.size * s + float(np.sum(lz)) + float(np.sum(np.log1p(xi * z)))
    if truncated:
        lmax = float(_log1p_div(xi, zmax))
        if lmax <= 0.0:
            return math.inf
        nll += excesses.size * math.log(-math.expm1(-lmax))
    return nll


def _fd_gradient(f, p, h=1e-6):
    g = np.empty(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (f(p + e) - f(p - e)) / (2 * h)
    return g


def _fit_gpd(excesses: np.ndarray, truncated: bool) -> tuple[float, float, float]:
    """Return (xi, ln sigma, loglik) maximizing the (truncated) GPD likelihood."""
    f = lambda p: gpd_negloglik(p, excesses, truncated)  # noqa: E731
    s0 = math.log(max(float(np.mean(excesses)), 1e-12))
    best = None
    tried = []
    for i, xi0 in enumerate(_STARTS):
        p0 = np.array([xi0, s0 if xi0 >= 0 else s0 + math.log(1.0 - 2.0 * xi0)])
        if not math.isfinite(f(p0)):
            continue
        res = optimize.minimize(f, p0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12,
                                         "maxiter": 4000, "adaptive": False})
        p, val = res.x, res.fun
        if math.isfinite(val):
            g = _fd_gradient(f, p)
            if np.all(np.isfinite(g)) and np.max(np.abs(g)) > 1e-6:
                # finite differences may step onto the +inf boundary
                with np.errstate(invalid="ignore"):
                    pol = optimize.minimize(f, p, method="BFGS", options={"gtol": 1e-9})
                if pol.fun <= val:
                    p, val = pol.x, pol.fun
        tried.append((float(val), res.nit, res.message))
        if math.isfinite(val) and (best is None or val < best[1] - 1e-9):
            best = (p, val)
        # two agreeing starts are enough
        if best is not None and i >= 1 and len(tried) >= 2 and abs(tried[-1][0] - tried[-2][0]) < 1e-7:
            break
    if best is None:
        raise EstimationError("GPD likelihood optimisation failed for all starts", attempts=tried)
    p, val = best
    return float(p[0]), float(p[1]), -float(val)


@dataclass(frozen=True)
class TruncatedGPDFit:
    k: int
    xi: float
    sigma: float
    threshold: float
    max_excess: float
    log_likelihood: float
    n: int

    @property
    def tau(self) -> float:
        return self.xi / self.sigma

    @property
    def exceedance_at_max(self) -> float:
        """(1 + tau E1)^(-1/xi): fitted parent survival at the maximum over the threshold."""
        return math.exp(-float(_log1p_div(self.xi, self.max_excess / self.sigma)))


def fit_truncated_gpd(sample, k: int) -> TruncatedGPDFit:
    x = _ordered(sample)
    threshold, e = _excesses(x, k, MIN_K_GPD)
    if e[-1] <= 0:
        raise EstimationError("all top excesses are zero", k=k)
    xi, s, ll = _fit_gpd(e, truncated=True)
    return TruncatedGPDFit(k, xi, math.exp(s), threshold, float(e[-1]), ll, x.size)


def endpoint_tgpd(fit: TruncatedGPDFit, sample=None, clamp: bool = True) -> EndpointResult:
    k = fit.k
    a = fit.exceedance_at_max
    extra = dict(xi=fit.xi, scale=fit.tau, d_t=truncation_odds_tgpd(fit))
    maximum = fit.threshold + fit.max_excess
    if a - 1.0 / k <= 0:
        return clamp_result("truncated_gpd", k, math.inf, maximum, clamp, **extra)
    log_b = math.log(1.0 - 1.0 / k) - math.log(a - 1.0 / k)
    raw = fit.threshold + fit.sigma * _expm1_div(fit.xi, log_b)
    return clamp_result("truncated_gpd", k, raw, maximum, clamp, **extra)


def truncation_odds_tgpd(fit: TruncatedGPDFit, sample=None) -> float:
    """Plug-in truncation odds, clamped at zero."""
    a = fit.exceedance_at_max
    k, n = fit.k, fit.n
    if a >= 1.0:
        return math.inf
    return max(0.0, (k + 1) / (n + 1) * (a - 1.0 / (k + 1)) / (1.0 - a))


def upper_bound_tgpd(fit: TruncatedGPDFit, odds: float, endpoint: float, alpha: float,
                     n: int | None = None) -> float:
    """100(1-alpha)% upper bound for the magnitude endpoint."""
    _check_alpha(alpha)
    n = fit.n if n is None else n
    if not math.isfinite(endpoint) or odds <= 0:
        return math.inf
    if math.isinf(odds):
        return endpoint
    ratio = (fit.k + 1) / ((n + 1) * odds)
    width = ratio / (fit.k + 1) * (1.0 + ratio) ** fit.xi * fit.sigma
    return endpoint - (math.log(alpha) + 1.0) * width


@dataclass(frozen=True)
class TruncationTest:
    k: int
    statistic: float
    p_value: float
    reject: bool


def test_truncation_gpd(sample, k: int, alpha: float = 0.1) -> TruncationTest:
    """Untruncated GPD fit; L = (k+1) S(E1), p = exp(-L)."""
    _check_alpha(alpha)
    x = _ordered(sample)
    _, e = _excesses(x, k, MIN_K_GPD)
    if e[-1] <= 0:
        stat = float(k + 1)
    else:
        xi0, s0, _ = _fit_gpd(e, truncated=False)
        stat = (k + 1) * math.exp(-float(_log1p_div(xi0, e[-1] * math.exp(-s0))))
    p = math.exp(-stat)
    return TruncationTest(k, stat, p, p < alpha)


test_truncation_gpd.__test__ = False


# -- truncated Pareto ----------------------------------------------------------

@dataclass(frozen=True)
class TruncatedParetoFit:
    k: int
    xi_plus: float
    log_r_k: float  # ln(X_{n-k,n}/X_{n,n}) <= 0
    log_threshold: float  # ln X_{n-k,n}
    n: int

    @property
    def r_k(self) -> float:
        return math.exp(self.log_r_k)

    @property
    def rho_hat(self) -> float:
        return math.exp(-self.log_r_k)

    @property
    def r_pow(self) -> float:
        """R_k^(1/xi)."""
        return math.exp(self.log_r_k / self.xi_plus)


def tpareto_score(xi: float, hill_stat: float, log_r: float) -> float:
    """xi + R^(1/xi) ln R / (1 - R^(1/xi)) - H; zero at the truncated Pareto MLE."""
    if log_r == 0.0:
        return xi - hill_stat
    with np.errstate(over="ignore"):
        corr = log_r / math.expm1(min(-log_r / xi, 700.0))
    return xi + corr - hill_stat


def tpareto_loglik(xi: float, log_values: np.ndarray, k: int) -> float:
    """Log-likelihood of the k largest over X_{n-k,n} under a Pareto truncated at X_{n,n}."""
    n = log_values.size
    spac = log_values[n - k:] - log_values[n - k - 1]
    log_r = -float(spac[-1])
    return (-k * math.log(xi) - (1.0 / xi + 1.0) * float(np.sum(spac))
            - k * math.log(-math.expm1(log_r / xi)))


def fit_truncated_pareto_logs(log_values: np.ndarray, k: int) -> TruncatedParetoFit:
    """Fit from ascending log-values (ln of the positive variable)."""
    n = log_values.size
    if not MIN_K_PARETO <= k <= n - 1:
        raise ValueError(f"k must be in [{MIN_K_PARETO}, {n - 1}], got {k}")
    h = hill_from_logs(log_values, k)
    log_r = float(log_values[n - k - 1] - log_values[n - 1])
    lo, hi = XI_ZERO, XI_MAX
    f_lo, f_hi = tpareto_score(lo, h, log_r), tpareto_score(hi, h, log_r)
    if not (f_lo < 0 < f_hi):
        raise EstimationError("no sign change of the truncated Pareto equation",
                              k=k, hill=h, log_r=log_r)
    root = optimize.brentq(tpareto_score, lo, hi, args=(h, log_r), xtol=ROOT_TOL * 1e-4,
                           rtol=4 * np.finfo(float).eps)
    return TruncatedParetoFit(k, float(root), log_r, float(log_values[n - k - 1]), n)


def fit_truncated_pareto(energies, k: int) -> TruncatedParetoFit:
    x = np.sort(np.asarray(energies, dtype=float))
    if np.any(x <= 0):
        raise ValueError("truncated Pareto fit requires positive values")
    return fit_truncated_pareto_logs(np.log(x), k)


def log_endpoint_tpareto(fit: TruncatedParetoFit) -> float:
    """ln of the estimated endpoint of the positive (energy) variable."""
    k = fit.k
    r = fit.r_pow
    if r - 1.0 / (k + 1) <= 0:
        return math.inf
    return fit.log_threshold - fit.xi_plus * (math.log(r - 1.0 / (k + 1)) - math.log(1.0 - 1.0 / (k + 1)))


def endpoint_tpareto(fit: TruncatedParetoFit, sample=None, clamp: bool = True) -> EndpointResult:
    """Energy endpoint mapped back to magnitude. ``fit`` must be on the energy scale."""
    log_t = log_endpoint_tpareto(fit)
    maximum = float(log_energy_to_magnitude(fit.log_threshold - fit.log_r_k))
    raw = math.inf if math.isinf(log_t) else float(log_energy_to_magnitude(log_t))
    return clamp_result("truncated_pareto", fit.k, raw, maximum, clamp,
                        xi=None, scale=fit.xi_plus, d_t=truncation_odds_tpareto(fit))


def truncation_odds_tpareto(fit: TruncatedParetoFit) -> float:
    r = fit.r_pow
    k, n = fit.k, fit.n
    if r >= 1.0:
        return math.inf
    return max(0.0, (k + 1) / (n + 1) * (r - 1.0 / (k + 1)) / (1.0 - r))


def upper_bound_tpareto(fit: TruncatedParetoFit, odds: float, endpoint: float, alpha: float,
                        n: int | None = None) -> float:
    _check_alpha(alpha)
    n = fit.n if n is None else n
    if not math.isfinite(endpoint) or odds <= 0:
        return math.inf
    if math.isinf(odds):
        return endpoint
    width = fit.xi_plus / ((n + 1) * odds)
    return endpoint - width * (math.log(alpha) + 1.0) / (ENERGY_SLOPE * _LN10)


def test_truncation_pareto_logs(log_values: np.ndarray, k: int, alpha: float = 0.1) -> TruncationTest:
    _check_alpha(alpha)
    n = log_values.size
    if not MIN_K_PARETO <= k <= n - 1:
        raise ValueError(f"k must be in [{MIN_K_PARETO}, {n - 1}], got {k}")
    h = hill_from_logs(log_values, k)
    log_r = float(log_values[n - k - 1] - log_values[n - 1])
    r_pow = 1.0 if h <= 0 else math.exp(log_r / h)
    stat = (k + 1) * r_pow
    p = math.exp(-stat)
    return TruncationTest(k, stat, p, p < alpha)


def test_truncation_pareto(energies, k: int, alpha: float = 0.1) -> TruncationTest:
    """L = (k+1) R_k^(1/H_k), p = exp(-L); small p indicates truncation."""
    x = np.sort(np.asarray(energies, dtype=float))
    if np.any(x <= 0):
        raise ValueError("truncation test requires positive values")
    return test_truncation_pareto_logs(np.log(x), k, alpha)


test_truncation_pareto.__test__ = False
test_truncation_pareto_logs.__test__ = False


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


# -- convenience over a sample -------------------------------------------------

def tgpd_estimate(sample: MagnitudeSample, k: int, alpha: float | None = None,
                  clamp: bool = True) -> EndpointResult:
    fit = fit_truncated_gpd(sample, k)
    res = endpoint_tgpd(fit, sample, clamp=clamp)
    if alpha is not None:
        ub = upper_bound_tgpd(fit, res.d_t, res.raw, alpha)
        res = res.with_bound(ub, alpha, INFINITE_BOUND if math.isinf(ub) else None)
    return res


def tpareto_estimate(sample: MagnitudeSample, k: int, alpha: float | None = None,
                     clamp: bool = True, log_energies: np.ndarray | None = None) -> EndpointResult:
    logs = sample.log_energies() if log_energies is None else log_energies
    fit = fit_truncated_pareto_logs(logs, k)
    res = endpoint_tpareto(fit, clamp=clamp)
    if alpha is not None:
        ub = upper_bound_tpareto(fit, res.d_t, res.raw, alpha)
        res = res.with_bound(ub, alpha, INFINITE_BOUND if math.isinf(ub) else None)
    return res
