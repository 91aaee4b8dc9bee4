"""CSV/JSON/manifest writers shared by the CLI."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .results import EndpointResult

ESTIMATE_COLUMNS = ("estimator", "k", "xi", "tau_or_xiplus", "d_t", "endpoint_raw",
                    "endpoint_clamped", "p_value", "upper_bound", "alpha", "flags")
DIAGNOSTIC_COLUMNS = ("kind", "k_or_index", "x", "y")
METRIC_COLUMNS = ("estimator", "k", "T_M", "metric_value", "replicates_used")


def fmt(value) -> str:
    """Six significant digits; 'inf' for infinities, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def parse_number(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    return float(text)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def result_row(res: EndpointResult) -> list:
    return [res.estimator, res.k, res.xi, res.scale, res.d_t, res.raw, res.estimate,
            res.p_value, res.upper_bound, res.alpha, ";".join(res.flags)]


def write_results(path: Path, results: Iterable[EndpointResult]) -> Path:
    return write_rows(path, ESTIMATE_COLUMNS, (result_row(r) for r in results))


def read_results(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_sample(path: Path, values: Sequence[float]) -> Path:
    # full precision so the sample can be read back exactly
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("magnitude\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")
    return path


def read_sample(path: Path) -> np.ndarray:
    """Magnitudes from a one-column file (header optional) or a CSV with a ``magnitude`` column."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no magnitudes")
    col = 0
    try:
        float(rows[0][0])
    except ValueError:
        header = [h.strip().lower() for h in rows[0]]
        col = header.index("magnitude") if "magnitude" in header else 0
        rows = rows[1:]
    return np.array([float(r[col]) for r in rows])


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, entries: Mapping[str, object]) -> Path:
    """Flat ``key = value`` text, one entry per line, in insertion order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")
    return path


def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if " = " in line:
                key, value = line.rstrip("\n").split(" = ", 1)
                out[key] = value
    return out


def write_json(path: Path, payload) -> Path:
    def default(o):
        if isinstance(o, (np.floating, float)):
            return fmt(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, Path):
            return str(o)
        raise TypeError(type(o))

    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return fmt(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj
