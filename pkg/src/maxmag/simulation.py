"""Truncated Gutenberg-Richter sampling and the Monte Carlo comparison study."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import MagnitudeSample
from .estimate import ESTIMATORS, run_estimators

DEFAULT_BETA = 2.1203
DEFAULT_T_MIN = 1.5
DEFAULT_T_MAX = (3.75, 4.0, 4.5)
DEFAULT_K_GRID = (25, 50, 75, 100, 125, 150, 175, 200)
METRICS = ("relative_mean", "relative_mse", "coverage")
BOUNDED = ("truncated_gpd", "truncated_pareto", "npos", "ks")


@dataclass(frozen=True)
class TruncatedGRParams:
    beta: float = DEFAULT_BETA
    t_M: float = DEFAULT_T_MIN
    T_M: float = DEFAULT_T_MAX[0]

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.T_M > self.t_M:
            raise ValueError(f"T_M ({self.T_M}) must exceed t_M ({self.t_M})")

    def cdf(self, m):
        m = np.clip(np.asarray(m, dtype=float), self.t_M, self.T_M)
        return np.expm1(-self.beta * (m - self.t_M)) / math.expm1(-self.beta * (self.T_M - self.t_M))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        mass = -math.expm1(-self.beta * (self.T_M - self.t_M))
        return self.t_M - np.log1p(-u * mass) / self.beta

    def untruncated_quantile_level(self) -> float:
        """Level at which T_M sits in the untruncated shifted exponential."""
        return -math.expm1(-self.beta * (self.T_M - self.t_M))

    def true_odds(self) -> float:
        """Exceedance odds of T_M under the parent exponential above t_M."""
        u = self.beta * (self.T_M - self.t_M)
        return math.exp(-u) / -math.expm1(-u)


@dataclass(frozen=True)
class StudyConfig:
    params: TruncatedGRParams = field(default_factory=TruncatedGRParams)
    replicates: int = 5000
    sample_size: int = 250
    alpha: float = 0.1
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    master_seed: int = 20170101
    estimators: tuple[str, ...] = ESTIMATORS
    clamp: bool = True

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.sample_size < 10:
            raise ValueError("sample_size must be at least 10")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        bad = [k for k in self.k_grid if not 1 <= k < self.sample_size]
        if bad:
            raise ValueError(f"k values {bad} outside [1, {self.sample_size - 1}]")
        object.__setattr__(self, "k_grid", tuple(sorted(set(int(k) for k in self.k_grid))))
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class MetricRow:
    estimator: str
    k: int
    relative_mean: float
    relative_mse: float
    coverage: float | None
    used: int
    failure_count: int
    bound_used: int
    relative_mean_se: float
    coverage_se: float | None


@dataclass
class SimulationReport:
    config: StudyConfig
    rows: list[MetricRow]
    elapsed: float = 0.0

    def get(self, estimator: str, k: int | None = None) -> MetricRow:
        for row in self.rows:
            if row.estimator == estimator and (k is None or row.k == k):
                return row
        raise KeyError((estimator, k))

    def metric_rows(self, metric: str) -> list[tuple]:
        out = []
        T = self.config.params.T_M
        for r in self.rows:
            if metric == "coverage":
                if r.coverage is None:
                    continue
                out.append((r.estimator, r.k, T, r.coverage, r.bound_used))
            else:
                out.append((r.estimator, r.k, T, getattr(r, metric), r.used))
        return out


def replicate_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(replicate)])


def sample_truncated_gr(params: TruncatedGRParams, n: int, seed=None) -> MagnitudeSample:
    """n inverse-CDF draws from the truncated GR law, sorted ascending."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    values = np.sort(params.quantile(rng.uniform(size=n)))
    return MagnitudeSample.from_values(values, params.t_M)


def _keys(config: StudyConfig) -> list[tuple[str, int]]:
    n = config.sample_size
    keys = []
    for est in config.estimators:
        if est in ("truncated_gpd", "truncated_pareto"):
            keys.extend((est, k) for k in config.k_grid)
        elif est in ("fl", "efl"):
            keys.extend((est, k) for k in sorted(set(config.k_grid) | {n}) if k >= 2 or est == "fl")
        elif est in ("rw", "rwc"):
            keys.append((est, 2))
        else:
            keys.append((est, n))
    return keys


def evaluate_replicate(config: StudyConfig, replicate: int) -> dict[tuple[str, int], tuple[float, float]]:
    """(estimate, bound) per (estimator, k) for one replicate; NaN marks a failure."""
    sample = sample_truncated_gr(config.params, config.sample_size,
                                 replicate_seed(config.master_seed, replicate))
    n = config.sample_size
    fl_k = sorted(set(config.k_grid) | {n})
    results = run_estimators(sample, config.estimators, evt_k=config.k_grid, fl_k=fl_k,
                             alpha=config.alpha, clamp=config.clamp, with_tests=False)
    out = {}
    for res in results:
        bound = res.upper_bound if res.upper_bound is not None else math.nan
        out[(res.estimator, res.k)] = (float(res.estimate), float(bound))
    return out


def _evaluate_chunk(config: StudyConfig, replicates: Sequence[int]):
    return [(r, evaluate_replicate(config, r)) for r in replicates]


def _aggregate(config: StudyConfig, est: np.ndarray, bnd: np.ndarray, keys) -> list[MetricRow]:
    T = config.params.T_M
    R = config.replicates
    rows = []
    for j, (name, k) in enumerate(keys):
        e = est[:, j]
        ok = np.isfinite(e)
        used = int(ok.sum())
        vals = e[ok].tolist()
        if used:
            mean = math.fsum(vals) / used
            mse = math.fsum((v - T) ** 2 for v in vals) / used
            var = math.fsum((v - mean) ** 2 for v in vals) / (used - 1) if used > 1 else math.nan
            rel_mean, rel_mse = mean / T, mse / (T * T)
            mean_se = math.sqrt(var / used) / T if used > 1 else math.nan
        else:
            rel_mean = rel_mse = mean_se = math.nan
        coverage = coverage_se = None
        b_used = 0
        if name in BOUNDED:
            b = bnd[:, j]
            # an infinite bound covers; NaN means the bound could not be computed
            have = ~np.isnan(b)
            b_used = int(have.sum())
            if b_used:
                coverage = float(np.sum(b[have] >= T)) / b_used
                coverage_se = math.sqrt(coverage * (1.0 - coverage) / b_used)
            else:
                coverage = math.nan
        rows.append(MetricRow(name, k, rel_mean, rel_mse, coverage, used, R - used, b_used,
                              mean_se, coverage_se))
    return rows


def run_study(config: StudyConfig, jobs: int = 1, progress=None) -> SimulationReport:
    """Monte Carlo study; identical output for a given seed whatever ``jobs`` is."""
    t0 = time.perf_counter()
    keys = _keys(config)
    index = {key: j for j, key in enumerate(keys)}
    R = config.replicates
    est = np.full((R, len(keys)), np.nan)
    bnd = np.full((R, len(keys)), np.nan)

    def store(r, values):
        for key, (e, b) in values.items():
            j = index.get(key)
            if j is not None:
                est[r, j], bnd[r, j] = e, b

    if jobs <= 1:
        for r in range(R):
            store(r, evaluate_replicate(config, r))
            if progress:
                progress(r + 1, R)
    else:
        chunk = max(1, min(50, R // (4 * jobs) or 1))
        chunks = [range(i, min(i + chunk, R)) for i in range(0, R, chunk)]
        done = 0
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_evaluate_chunk, [config] * len(chunks), chunks):
                for r, values in part:
                    store(r, values)
                done += len(part)
                if progress:
                    progress(done, R)
    rows = _aggregate(config, est, bnd, keys)
    return SimulationReport(config, rows, time.perf_counter() - t0)


def config_entries(config: StudyConfig) -> dict[str, object]:
    """Flat view of a study configuration for manifests."""
    d = asdict(config)
    params = d.pop("params")
    out = {f"params.{k}": v for k, v in params.items()}
    for k, v in d.items():
        out[k] = ",".join(str(x) for x in v) if isinstance(v, (list, tuple)) else v
    return out


def write_report(report: SimulationReport, out_dir: Path) -> list[Path]:
    """One CSV per metric, named ``<metric>_T<T_M>.csv``."""
    from .io import METRIC_COLUMNS, fmt, write_rows

    out_dir = Path(out_dir)
    tag = fmt(report.config.params.T_M)
    return [write_rows(out_dir / f"{metric}_T{tag}.csv", METRIC_COLUMNS, report.metric_rows(metric))
            for metric in METRICS]
