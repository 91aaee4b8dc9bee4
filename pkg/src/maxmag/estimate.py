"""Run the endpoint estimators over a sample, collecting failures instead of raising."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from . import classical, evt
from .catalog import MagnitudeSample
from .results import EndpointResult, EstimationError

ESTIMATORS = ("truncated_gpd", "truncated_pareto", "npg", "npos", "fl", "efl", "rw", "rwc", "ks")
EVT_ESTIMATORS = ("truncated_gpd", "truncated_pareto")
BOUNDS = ("truncated_gpd", "truncated_pareto", "npos", "ks")
ALIASES = {
    "tgpd": "truncated_gpd", "gpd": "truncated_gpd",
    "tpareto": "truncated_pareto", "pareto": "truncated_pareto",
    "n-p-g": "npg", "n-p-os": "npos", "r-w": "rw", "r-w-c": "rwc", "k-s": "ks",
    "pisarenko": "ks",
}
LABELS = {
    "truncated_gpd": "Truncated GPD",
    "truncated_pareto": "Truncated Pareto",
    "npg": "N-P-G",
    "npos": "N-P-OS",
    "fl": "FL",
    "efl": "EFL",
    "rw": "R-W",
    "rwc": "R-W-C",
    "ks": "K-S",
}


def resolve(names: Iterable[str]) -> list[str]:
    out = []
    for name in names:
        key = ALIASES.get(name.strip().lower(), name.strip().lower())
        if key not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
        if key not in out:
            out.append(key)
    return out


def default_evt_grid(n: int) -> list[int]:
    return list(range(5, n))


def failed(estimator: str, k: int | None, exc: Exception) -> EndpointResult:
    return EndpointResult(estimator, k, math.nan, math.nan, flags=(f"error: {exc}",))


def _attempt(fn, estimator: str, k: int | None) -> EndpointResult:
    try:
        return fn()
    except (EstimationError, ValueError, ArithmeticError) as exc:
        return failed(estimator, k, exc)


def evt_result(sample: MagnitudeSample, estimator: str, k: int, alpha: float | None,
               clamp: bool = True, with_test: bool = True, log_energies=None) -> EndpointResult:
    """Endpoint (+ bound, + truncation-test p-value) of one EVT estimator at one k."""
    def run():
        if estimator == "truncated_gpd":
            res = evt.tgpd_estimate(sample, k, alpha, clamp)
            p = evt.test_truncation_gpd(sample, k).p_value if with_test else None
        else:
            logs = sample.log_energies() if log_energies is None else log_energies
            res = evt.tpareto_estimate(sample, k, alpha, clamp, log_energies=logs)
            p = evt.test_truncation_pareto_logs(logs, k).p_value if with_test else None
        return _with_p(res, p)
    return _attempt(run, estimator, k)


def _with_p(res: EndpointResult, p: float | None) -> EndpointResult:
    from dataclasses import replace
    return replace(res, p_value=p)


def run_estimators(sample: MagnitudeSample, estimators: Sequence[str] = ESTIMATORS,
                   evt_k: Sequence[int] | None = None, fl_k: Sequence[int] | None = None,
                   alpha: float | None = None, clamp: bool = True,
                   np_config: classical.NPConfig | None = None,
                   with_tests: bool = True) -> list[EndpointResult]:
    """All requested estimators; EVT ones over ``evt_k``, FL/EFL over ``fl_k``.

    Bounds are attached (at level ``alpha``) for the four estimators that
    have one; the K-S row carries the parametric (Pisarenko) bound.
    """
    n = sample.n
    evt_k = default_evt_grid(n) if evt_k is None else list(evt_k)
    fl_k = [n] if fl_k is None else list(fl_k)
    logs = sample.log_energies()
    out: list[EndpointResult] = []
    for est in resolve(estimators):
        if est in EVT_ESTIMATORS:
            for k in evt_k:
                out.append(evt_result(sample, est, k, alpha, clamp, with_tests, logs))
        elif est == "npg":
            out.append(_attempt(lambda: classical.npg_endpoint(sample, np_config), est, n))
        elif est == "npos":
            out.append(_attempt(lambda: classical.npos_estimate(sample, alpha, np_config), est, n))
        elif est == "fl":
            out.extend(_attempt(lambda k=k: classical.fl_endpoint(sample, k), est, k) for k in fl_k)
        elif est == "efl":
            out.extend(_attempt(lambda k=k: classical.efl_endpoint(sample, k), est, k) for k in fl_k)
        elif est == "rw":
            def rw():
                res = classical.rw_endpoint(sample)
                if alpha is not None:
                    res = res.with_bound(classical.rw_upper_bound(sample, alpha), alpha)
                return res
            out.append(_attempt(rw, est, 2))
        elif est == "rwc":
            out.append(_attempt(lambda: classical.rwc_endpoint(sample, np_config), est, 2))
        elif est == "ks":
            out.append(_attempt(lambda: classical.ks_estimate(sample, alpha), est, n))
    return out


def run_bounds(sample: MagnitudeSample, alpha: float, k: Sequence[int] | int,
               clamp: bool = True, np_config: classical.NPConfig | None = None) -> list[EndpointResult]:
    """The four upper confidence bounds (EVT ones at each k) with their point estimates."""
    ks = [k] if isinstance(k, int) else list(k)
    return run_estimators(sample, BOUNDS, evt_k=ks, alpha=alpha, clamp=clamp,
                          np_config=np_config, with_tests=False)
