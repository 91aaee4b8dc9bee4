"""Command-line front end: catalog, estimate, bounds, diagnose, simulate.

Every command writes plot-ready CSV files, a ``summary.json`` and a
``manifest.txt`` (key = value) into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import math
import shlex
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, diagnostics, evt
from . import io as mio
from .catalog import (GRONINGEN_FILTER, SCHEMA_PRESETS, CatalogError, CatalogFilter,
                      MagnitudeSample, build_sample, filter_events, read_catalog,
                      schema_from_mapping, smooth_ties)
from .estimate import BOUNDS, ESTIMATORS, LABELS, resolve, run_bounds, run_estimators
from .results import EstimationError
from .simulation import (DEFAULT_BETA, DEFAULT_K_GRID, DEFAULT_T_MAX, StudyConfig,
                         TruncatedGRParams, config_entries, run_study, write_report)

DEFAULT_SEED = 1


class Run:
    """Collects outputs and metadata for the manifest of one command."""

    def __init__(self, command: str, args: argparse.Namespace, argv: Sequence[str]):
        self.command = command
        self.args = args
        self.argv = list(argv)
        self.started = _now()
        self.inputs: dict[str, Path] = {}
        self.outputs: list[Path] = []
        self.extra: dict[str, object] = {}

    def out(self, name: str) -> Path:
        return Path(self.args.out_dir) / name

    def add(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return path

    def finish(self) -> Path:
        entries: dict[str, object] = {
            "command": self.command,
            "tool_version": __version__,
            "argv": shlex.join(["maxmag", *self.argv]),
        }
        for key, value in sorted(vars(self.args).items()):
            if key in ("func", "command"):
                continue
            entries[f"config.{key}"] = _show(value)
        entries.update(self.extra)
        for name, path in self.inputs.items():
            entries[f"input.{name}"] = str(path)
            entries[f"input.{name}.sha256"] = mio.sha256(path)
        for path in self.outputs:
            entries[f"output.{path.name}.sha256"] = mio.sha256(path)
        entries["started"] = self.started
        entries["finished"] = _now()
        return mio.write_manifest(self.out("manifest.txt"), entries)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _show(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_show(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- argument types ------------------------------------------------------------------

def alpha_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return value


def bbox_type(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox needs LAT1,LON1,LAT2,LON2")
    try:
        lat1, lon1, lat2, lon2 = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bbox {text!r}")
    return lat1, lon1, lat2, lon2


def date_range_type(text: str) -> tuple[datetime, datetime]:
    """``START,END`` as ISO dates; END is inclusive to the end of that day."""
    try:
        start, end = (datetime.fromisoformat(p.strip()) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("date range needs START,END in ISO format")
    start = start if start.tzinfo else start.replace(tzinfo=timezone.utc)
    end = end if end.tzinfo else end.replace(tzinfo=timezone.utc)
    if len(text.split(",")[1].strip()) <= 10:
        end = end + timedelta(days=1) - timedelta(microseconds=1)
    if end < start:
        raise argparse.ArgumentTypeError("date range ends before it starts")
    return start, end


def k_grid_type(text: str) -> list[int]:
    """``A:B`` (inclusive), ``A:B:STEP`` or a comma list."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            step = parts[2] if len(parts) == 3 else 1
            values = list(range(parts[0], parts[1] + 1, step))
        else:
            values = [int(p) for p in text.split(",")]
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"bad k grid {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("k values must be positive")
    return values


def float_list_type(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}")


def names_type(text: str) -> list[str]:
    try:
        return resolve(text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


# -- sample loading ------------------------------------------------------------------

def _schema(text: str | None):
    if text is None:
        return None
    if text in SCHEMA_PRESETS:
        return SCHEMA_PRESETS[text]
    pairs = dict(p.split("=", 1) for p in text.split(",") if "=" in p)
    if not pairs:
        raise CatalogError(f"unknown schema {text!r}; use {', '.join(SCHEMA_PRESETS)} or field=header pairs")
    return schema_from_mapping(pairs)


def _filter(args) -> CatalogFilter | None:
    if args.groningen:
        base = GRONINGEN_FILTER
    elif args.bbox is None and args.date_range is None:
        return None
    else:
        base = CatalogFilter(-90.0, 90.0, -180.0, 180.0)
    lat_min, lat_max, lon_min, lon_max = base.lat_min, base.lat_max, base.lon_min, base.lon_max
    if args.bbox is not None:
        lat1, lon1, lat2, lon2 = args.bbox
        lat_min, lat_max = sorted((lat1, lat2))
        lon_min, lon_max = sorted((lon1, lon2))
    date_range = args.date_range if args.date_range is not None else base.date_range
    return CatalogFilter(lat_min, lat_max, lon_min, lon_max, date_range=date_range)


def load_sample(args, run: Run) -> MagnitudeSample:
    """Sample from ``--sample`` (bare magnitudes) or ``--input`` (catalog)."""
    if args.sample is not None:
        path = Path(args.sample)
        if not path.is_file():
            raise CatalogError(f"sample file not found: {path}")
        run.inputs["sample"] = path
        mags = mio.read_sample(path)
        if args.smooth_ties:
            mags = smooth_ties(np.sort(mags), seed=args.seed)
        kept = np.sort(mags[mags >= args.t_min])
        if kept.size == 0:
            raise CatalogError(f"no magnitudes at or above t_M={args.t_min}")
        return MagnitudeSample(kept, args.t_min, args.seed if args.smooth_ties else None)
    if args.input is None:
        raise CatalogError("give a catalog with --input or magnitudes with --sample")
    path = Path(args.input)
    if not path.is_file():
        raise CatalogError(f"catalog file not found: {path}")
    run.inputs["catalog"] = path
    events = read_catalog(path, _schema(args.schema))
    run.extra["events_read"] = len(events)
    flt = _filter(args)
    if flt is not None:
        events = filter_events(events, flt)
    run.extra["events_after_filter"] = len(events)
    if not events:
        raise CatalogError("no events left after filtering")
    return build_sample(events, args.t_min, seed=args.seed)


def _sample_summary(sample: MagnitudeSample) -> dict:
    return {"n": sample.n, "t_M": sample.t_M, "min": float(sample.values[0]),
            "max": float(sample.values[-1]), "smoothing_seed": sample.smoothing_seed}


def _ref_k(args, n: int) -> int:
    k = args.k if args.k is not None else n // 2
    if not 1 <= k < n:
        raise CatalogError(f"k={k} outside [1, {n - 1}] for a sample of size {n}")
    return k


def _evt_grid(args, n: int) -> list[int]:
    if args.k is not None:
        return [_ref_k(args, n)]
    if args.k_grid is not None:
        return [k for k in args.k_grid if k < n]
    return list(range(5, n))


def _result_summary(res) -> dict:
    return {"estimator": res.estimator, "label": LABELS[res.estimator], "k": res.k,
            "estimate": res.estimate, "raw": res.raw, "upper_bound": res.upper_bound,
            "alpha": res.alpha, "flags": list(res.flags)}


# -- commands ------------------------------------------------------------------------

def cmd_catalog(args, run: Run) -> int:
    sample = load_sample(args, run)
    run.add(mio.write_sample(run.out("sample.csv"), sample.values))
    summary = _sample_summary(sample)
    summary.update({k: v for k, v in run.extra.items()})
    run.add(mio.write_json(run.out("summary.json"), summary))
    print(f"n = {sample.n}  t_M = {mio.fmt(sample.t_M)}  "
          f"min = {mio.fmt(sample.values[0])}  max = {mio.fmt(sample.values[-1])}")
    return 0


def cmd_estimate(args, run: Run) -> int:
    sample = load_sample(args, run)
    n = sample.n
    evt_k = _evt_grid(args, n)
    results = run_estimators(sample, args.estimators, evt_k=evt_k, fl_k=[n],
                             alpha=args.alpha, clamp=args.clamp)
    run.add(mio.write_results(run.out("estimates.csv"), results))
    k_ref = _ref_k(args, n) if args.k is not None or n // 2 in evt_k else None
    headline = [r for r in results
                if r.estimator not in ("truncated_gpd", "truncated_pareto") or r.k == k_ref]
    summary = {"sample": _sample_summary(sample), "k_reference": k_ref, "alpha": args.alpha,
               "rows": len(results), "failed_rows": sum(1 for r in results if math.isnan(r.raw)),
               "estimates": [_result_summary(r) for r in headline]}
    run.add(mio.write_json(run.out("summary.json"), summary))
    for r in headline:
        print(f"{LABELS[r.estimator]:<17} k={r.k:<4} {mio.fmt(r.estimate)}")
    return 0


def cmd_bounds(args, run: Run) -> int:
    sample = load_sample(args, run)
    k = _ref_k(args, sample.n)
    results = run_bounds(sample, args.alpha, k, clamp=args.clamp)
    run.add(mio.write_results(run.out("bounds.csv"), results))
    summary = {"sample": _sample_summary(sample), "k": k, "alpha": args.alpha,
               "bounds": [_result_summary(r) for r in results]}
    run.add(mio.write_json(run.out("summary.json"), summary))
    for r in results:
        name = "Pisarenko" if r.estimator == "ks" else LABELS[r.estimator]
        print(f"{name:<17} {mio.fmt(r.upper_bound)}")
    return 0


def _safe(fn, *a):
    try:
        return fn(*a)
    except (EstimationError, ValueError, ArithmeticError):
        return None


def cmd_diagnose(args, run: Run) -> int:
    sample = load_sample(args, run)
    n = sample.n
    for qq_fn in (diagnostics.exponential_qq, diagnostics.pareto_qq):
        qq = _safe(qq_fn, sample)
        kind = qq_fn.__name__.replace("_qq", "")
        rows = [] if qq is None else [(kind, i + 1, x, y) for i, (x, y) in enumerate(qq.points)]
        run.add(mio.write_rows(run.out(f"qq_{kind}.csv"), mio.DIAGNOSTIC_COLUMNS, rows))

    me = _safe(diagnostics.mean_excess, sample)
    rows = [] if me is None else [("mean_excess", k, t, m) for k, t, m in me.entries]
    run.add(mio.write_rows(run.out("mean_excess.csv"), mio.DIAGNOSTIC_COLUMNS, rows))

    logs = sample.log_energies()
    ks = _evt_grid(args, n)
    tail, tests = [], []
    for k in ks:
        gpd = _safe(evt.fit_truncated_gpd, sample, k)
        par = _safe(evt.fit_truncated_pareto_logs, logs, k)
        hill = _safe(diagnostics.hill_from_logs, logs, k)
        tail.append(("xi_gpd", k, k, math.nan if gpd is None else gpd.xi))
        tail.append(("xi_pareto", k, k, math.nan if par is None else par.xi_plus))
        tail.append(("hill_energy", k, k, math.nan if hill is None else hill))
        d_gpd = _safe(evt.truncation_odds_tgpd, gpd) if gpd is not None else None
        d_par = _safe(evt.truncation_odds_tpareto, par) if par is not None else None
        tail.append(("d_t_gpd", k, k, math.nan if d_gpd is None else d_gpd))
        tail.append(("d_t_pareto", k, k, math.nan if d_par is None else d_par))
        t_gpd = _safe(evt.test_truncation_gpd, sample, k, args.alpha)
        t_par = _safe(evt.test_truncation_pareto_logs, logs, k, args.alpha)
        tests.append(("p_gpd", k, math.nan if t_gpd is None else t_gpd.statistic,
                      math.nan if t_gpd is None else t_gpd.p_value))
        tests.append(("p_pareto", k, math.nan if t_par is None else t_par.statistic,
                      math.nan if t_par is None else t_par.p_value))
    run.add(mio.write_rows(run.out("tail.csv"), mio.DIAGNOSTIC_COLUMNS, tail))
    run.add(mio.write_rows(run.out("tests.csv"), mio.DIAGNOSTIC_COLUMNS, tests))

    p_par = [(k, p) for kind, k, _, p in tests if kind == "p_pareto"]
    rejected = [k for k, p in p_par if p is not None and p < args.alpha]
    summary = {"sample": _sample_summary(sample), "alpha": args.alpha,
               "pareto_test_rejects_at": rejected,
               "pareto_test_min_k_rejecting_onwards": _tail_start(p_par, args.alpha)}
    run.add(mio.write_json(run.out("summary.json"), summary))
    print(f"n = {n}; Pareto truncation test rejects at {len(rejected)} of {len(p_par)} k values")
    return 0


def _tail_start(p_by_k, alpha) -> int | None:
    """Smallest k from which every p-value on the grid stays below alpha."""
    start = None
    for k, p in sorted(p_by_k):
        if p < alpha:
            start = k if start is None else start
        else:
            start = None
    return start


def cmd_simulate(args, run: Run) -> int:
    summary = {"studies": []}
    run.extra["seed.master"] = args.seed
    for T in args.T_M:
        params = TruncatedGRParams(beta=args.beta, t_M=args.t_min, T_M=T)
        config = StudyConfig(params=params, replicates=args.replicates,
                             sample_size=args.sample_size, alpha=args.alpha,
                             k_grid=tuple(args.k_grid), master_seed=args.seed,
                             estimators=tuple(args.estimators), clamp=args.clamp)
        progress = None if args.quiet else _progress(T)
        report = run_study(config, jobs=args.jobs, progress=progress)
        for path in write_report(report, Path(args.out_dir)):
            run.add(path)
        run.extra[f"elapsed_seconds.T{mio.fmt(T)}"] = f"{report.elapsed:.1f}"
        summary["studies"].append({
            "config": config_entries(config),
            "rows": [vars(r) for r in report.rows],
        })
        if not args.quiet:
            print(f"T_M = {mio.fmt(T)}: {args.replicates} replicates in {report.elapsed:.1f} s",
                  file=sys.stderr)
    run.add(mio.write_json(run.out("summary.json"), summary))
    return 0


def _progress(T):
    def report(done, total):
        if done == total or done % max(1, total // 20) == 0:
            print(f"  T_M = {mio.fmt(T)}: {done}/{total}", file=sys.stderr)
    return report


# -- parser --------------------------------------------------------------------------

def _add_sample_args(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("input")
    src.add_argument("--input", help="event catalog (CSV, ',' or ';' separated)")
    src.add_argument("--sample", help="file of bare magnitudes (one per line, or a 'magnitude' column)")
    src.add_argument("--schema", default=None,
                     help=f"catalog column preset ({', '.join(SCHEMA_PRESETS)}) or field=header pairs")
    src.add_argument("--groningen", action="store_true",
                     help="apply the Groningen gas field rectangle and 1986-12-01..2016-12-31 period")
    src.add_argument("--bbox", type=bbox_type, help="LAT1,LON1,LAT2,LON2 (closed box)")
    src.add_argument("--date-range", type=date_range_type, help="START,END (ISO dates, inclusive)")
    src.add_argument("--t-min", type=float, default=1.5, help="completeness threshold t_M")
    src.add_argument("--seed", type=int, default=DEFAULT_SEED, help="tie-smoothing seed")
    src.add_argument("--smooth-ties", action="store_true",
                     help="jitter ties in --sample input too (catalog input is always smoothed)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default="maxmag-out", help="output directory")
    p.add_argument("--alpha", type=alpha_type, default=0.1, help="upper bound level (default 0.1)")
    p.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=True,
                   help="clamp estimates below the sample maximum to it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxmag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="filter and tie-smooth a catalog into a sample file")
    _add_sample_args(p)
    p.add_argument("--out-dir", default="maxmag-out")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("estimate", help="endpoint estimates over a k grid")
    _add_sample_args(p)
    _add_common(p)
    p.add_argument("--k", type=int, help="single k for the EVT estimators")
    p.add_argument("--k-grid", type=k_grid_type, help="EVT k grid, A:B[:STEP] or a comma list (default 5..n-1)")
    p.add_argument("--estimators", type=names_type, default=list(ESTIMATORS),
                   help=f"comma list from {', '.join(ESTIMATORS)}")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="upper confidence bounds at level alpha")
    _add_sample_args(p)
    _add_common(p)
    p.add_argument("--k", type=int, help="k for the EVT bounds (default n // 2)")
    p.set_defaults(func=cmd_bounds, estimators=list(BOUNDS))

    p = sub.add_parser("diagnose", help="QQ data, mean excess, tail fits and truncation tests")
    _add_sample_args(p)
    _add_common(p)
    p.add_argument("--k", type=int, help="single k")
    p.add_argument("--k-grid", type=k_grid_type, help="k grid (default 5..n-1)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte Carlo study under a truncated GR law")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=5000)
    p.add_argument("--sample-size", type=int, default=250)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--t-min", type=float, default=1.5)
    p.add_argument("--T-M", dest="T_M", type=float_list_type, default=list(DEFAULT_T_MAX),
                   help="comma list of true endpoints")
    p.add_argument("--k-grid", type=k_grid_type, default=list(DEFAULT_K_GRID))
    p.add_argument("--estimators", type=names_type, default=list(ESTIMATORS))
    p.add_argument("--seed", type=int, default=20170101, help="master seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "sample", None) is not None and getattr(args, "input", None) is not None:
        parser.error("give either --input or --sample, not both")
    if args.command == "simulate":
        try:
            StudyConfig(replicates=args.replicates, sample_size=args.sample_size,
                        alpha=args.alpha, k_grid=tuple(args.k_grid))
            for T in args.T_M:
                TruncatedGRParams(args.beta, args.t_min, T)
        except ValueError as exc:
            parser.error(str(exc))
        if args.jobs < 1:
            parser.error("--jobs must be at least 1")
    run = Run(args.command, args, argv)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    try:
        code = args.func(args, run)
    except (CatalogError, EstimationError, OSError, ValueError) as exc:
        print(f"maxmag {args.command}: error: {exc}", file=sys.stderr)
        return 1
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
