"""Event catalog ingestion, filtering, tie smoothing and the magnitude/energy map."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, time, timezone
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

ENERGY_FACTOR_MJ = 2.0
ENERGY_SLOPE = 1.5
_LN10 = math.log(10.0)


class CatalogError(ValueError):
    """Raised when a catalog cannot be read or a sample cannot be built."""


class SchemaError(CatalogError):
    pass


class RowError(CatalogError):
    """A malformed data row; ``row`` counts data rows from 1, ``line`` counts file lines."""

    def __init__(self, row: int, line: int, message: str):
        super().__init__(f"row {row} (line {line}): {message}")
        self.row = row
        self.line = line


@dataclass(frozen=True)
class SeismicEvent:
    timestamp: datetime
    latitude: float
    longitude: float
    magnitude: float
    depth: float | None = None
    label: str | None = None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not math.isfinite(self.magnitude):
            raise ValueError(f"magnitude is not finite: {self.magnitude}")


@dataclass(frozen=True)
class CatalogFilter:
    """Closed bounding box, minimum magnitude and optional inclusive date range."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    magnitude_min: float = -math.inf
    date_range: tuple[datetime, datetime] | None = None

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise ValueError("lat_min must be smaller than lat_max")
        if not self.lon_min < self.lon_max:
            raise ValueError("lon_min must be smaller than lon_max")

    def accepts(self, event: SeismicEvent) -> bool:
        if not (self.lat_min <= event.latitude <= self.lat_max
                and self.lon_min <= event.longitude <= self.lon_max):
            return False
        if event.magnitude < self.magnitude_min:
            return False
        if self.date_range is not None:
            start, end = self.date_range
            if not start <= event.timestamp <= end:
                return False
        return True


# Rectangle (53.1N, 6.5E)-(53.5N, 7.0E) and period Dec 1986 - 31 Dec 2016.
GRONINGEN_FILTER = CatalogFilter(
    lat_min=53.1, lat_max=53.5, lon_min=6.5, lon_max=7.0, magnitude_min=1.5,
    date_range=(datetime(1986, 12, 1, tzinfo=timezone.utc),
                datetime(2016, 12, 31, 23, 59, 59, 999999, tzinfo=timezone.utc)),
)


@dataclass(frozen=True)
class CatalogSchema:
    """Maps SeismicEvent fields to header names of a delimited file.

    ``time`` is an optional separate time-of-day column that is combined
    with ``timestamp``. ``date_format`` is a strptime pattern tried after
    ISO-8601 parsing fails.
    """

    timestamp: str
    latitude: str
    longitude: str
    magnitude: str
    depth: str | None = None
    label: str | None = None
    time: str | None = None
    date_format: str | None = "%d-%m-%Y"
    time_format: str | None = None


SCHEMA_PRESETS: dict[str, CatalogSchema] = {
    "generic": CatalogSchema(timestamp="date", latitude="lat", longitude="lon",
                             magnitude="mag", depth="depth", label="location"),
    # Layout of the KNMI induced-seismicity export (YYMMDD/TIME columns).
    "knmi": CatalogSchema(timestamp="YYMMDD", time="TIME", latitude="LAT",
                          longitude="LON", magnitude="MAG", depth="DEPTH",
                          label="LOCATION", date_format="%Y%m%d", time_format="%H%M%S"),
}


def schema_from_mapping(mapping: Mapping[str, str]) -> CatalogSchema:
    """Build a schema from ``field=header`` pairs, e.g. parsed from the CLI."""
    allowed = set(CatalogSchema.__dataclass_fields__)
    unknown = set(mapping) - allowed
    if unknown:
        raise SchemaError(f"unknown schema fields: {sorted(unknown)}")
    missing = {"timestamp", "latitude", "longitude", "magnitude"} - set(mapping)
    if missing:
        raise SchemaError(f"schema lacks required fields: {sorted(missing)}")
    return CatalogSchema(**mapping)


def _parse_datetime(text: str, schema: CatalogSchema, time_text: str | None) -> datetime:
    text = text.strip()
    parsed: datetime | None = None
    try:
        parsed = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        if schema.date_format is None:
            raise
        parsed = datetime.strptime(text, schema.date_format)
    if time_text is not None and time_text.strip():
        tt = time_text.strip()
        if schema.time_format:
            # zero-pad compact clock strings such as 41530 -> 041530
            if "%" in schema.time_format and ":" not in tt and "." not in tt:
                tt = tt.zfill(6)
            clock = datetime.strptime(tt, schema.time_format).time()
        else:
            clock = time.fromisoformat(tt)
        parsed = datetime.combine(parsed.date(), clock)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def _sniff_delimiter(header: str) -> str:
    return ";" if header.count(";") > header.count(",") else ","


def parse_catalog(source: TextIO | str, schema: CatalogSchema | None = None) -> list[SeismicEvent]:
    """Read a delimited catalog with a header row into events, in file order.

    Comma or semicolon delimiters are detected from the header line. Blank
    lines are skipped. A malformed row raises :class:`RowError` naming its
    line number (the header is line 1).
    """
    schema = schema or SCHEMA_PRESETS["generic"]
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = source.read().splitlines()
    if not lines:
        raise SchemaError("empty catalog")
    delimiter = _sniff_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    index = {name: i for i, name in enumerate(header)}

    columns = {}
    for fld in ("timestamp", "latitude", "longitude", "magnitude", "depth", "label", "time"):
        name = getattr(schema, fld)
        if name is None:
            continue
        if name not in index:
            if fld in ("depth", "label"):
                continue
            raise SchemaError(f"column {name!r} (for {fld}) not found in header {header}")
        columns[fld] = index[name]

    events = []
    rowno = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        rowno += 1
        try:
            cell = {fld: row[i] for fld, i in columns.items()}
        except IndexError:
            raise RowError(rowno, lineno, f"expected {len(header)} columns, got {len(row)}") from None
        try:
            ts = _parse_datetime(cell["timestamp"], schema, cell.get("time"))
        except ValueError as exc:
            raise RowError(rowno, lineno, f"bad date {cell['timestamp']!r}: {exc}") from None
        try:
            lat = float(cell["latitude"])
            lon = float(cell["longitude"])
            mag = float(cell["magnitude"])
            depth_text = cell.get("depth", "").strip()
            depth = float(depth_text) if depth_text else None
        except ValueError as exc:
            raise RowError(rowno, lineno, f"bad number: {exc}") from None
        label = cell.get("label")
        try:
            events.append(SeismicEvent(ts, lat, lon, mag, depth, label.strip() if label else None))
        except ValueError as exc:
            raise RowError(rowno, lineno, str(exc)) from None
    return events


def read_catalog(path, schema: CatalogSchema | None = None) -> list[SeismicEvent]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return parse_catalog(fh, schema)


def filter_events(catalog: Iterable[SeismicEvent], flt: CatalogFilter) -> list[SeismicEvent]:
    return [ev for ev in catalog if flt.accepts(ev)]


def smooth_ties(magnitudes: Sequence[float], half_width: float = 0.05,
                seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Jitter every magnitude value that occurs more than once.

    Repeated values get independent Uniform(-half_width, half_width)
    perturbations; values occurring once are returned unchanged. A
    perturbation that collides with another output value is re-drawn.
    Output keeps the input order.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mags = np.asarray(magnitudes, dtype=float)
    out = mags.copy()
    if mags.size == 0:
        return out
    uniq, inverse, counts = np.unique(mags, return_inverse=True, return_counts=True)
    tied = counts[inverse] > 1
    idx = np.flatnonzero(tied)
    out[idx] = mags[idx] + rng.uniform(-half_width, half_width, size=idx.size)
    while True:
        _, first, cnt = np.unique(out, return_index=True, return_counts=True)
        if np.all(cnt == 1):
            return out
        dup_vals = set(out[first[cnt > 1]].tolist())
        redraw = [i for i in idx if out[i] in dup_vals]
        if not redraw:
            # only singletons collide with each other; cannot happen for unique inputs
            raise CatalogError("duplicate magnitudes remain among untied values")
        redraw = np.asarray(redraw)
        out[redraw] = mags[redraw] + rng.uniform(-half_width, half_width, size=redraw.size)


@dataclass(frozen=True)
class MagnitudeSample:
    """Ascending magnitudes at or above the completeness level ``t_M``."""

    values: np.ndarray
    t_M: float
    smoothing_seed: int | None = None
    _energy_log: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise CatalogError("sample must be a non-empty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise CatalogError("sample contains non-finite magnitudes")
        if np.any(np.diff(vals) < 0):
            raise CatalogError("sample values must be sorted ascending")
        if vals[0] < self.t_M:
            raise CatalogError(f"sample value {vals[0]} below threshold {self.t_M}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values, t_M: float, smoothing_seed: int | None = None) -> "MagnitudeSample":
        """Sort arbitrary magnitudes (all >= t_M) into a sample."""
        return cls(np.sort(np.asarray(values, dtype=float)), t_M, smoothing_seed)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def maximum(self) -> float:
        return float(self.values[-1])

    def order_stat(self, i: int) -> float:
        """M_{i,n}, 1-based."""
        return float(self.values[i - 1])

    def top(self, j: int) -> float:
        """The j-th largest value M_{n-j+1,n} (j=1 is the maximum)."""
        return float(self.values[self.n - j])

    def log_energies(self) -> np.ndarray:
        return log_energy(self.values)

    def shifted(self, c: float) -> "MagnitudeSample":
        return MagnitudeSample(self.values + c, self.t_M + c, self.smoothing_seed)


def build_sample(catalog: Iterable[SeismicEvent] | Sequence[float], t_M: float,
                 seed: int | None = None, half_width: float = 0.05) -> MagnitudeSample:
    """Smooth ties, apply the completeness threshold and sort.

    Accepts events or bare magnitudes.
    """
    # sorted first so the jitter assignment does not depend on row order
    mags = sorted(ev.magnitude if isinstance(ev, SeismicEvent) else float(ev) for ev in catalog)
    if not mags:
        raise CatalogError("catalog is empty")
    smoothed = smooth_ties(mags, half_width=half_width, seed=seed)
    kept = np.sort(smoothed[smoothed >= t_M])
    if kept.size == 0:
        raise CatalogError(f"no magnitudes at or above t_M={t_M}")
    return MagnitudeSample(kept, t_M, seed)


def magnitude_to_energy(m):
    """Released energy in MJ: E = 2 * 10**(1.5 (M - 1))."""
    if np.ndim(m):
        return ENERGY_FACTOR_MJ * np.power(10.0, ENERGY_SLOPE * (np.asarray(m, dtype=float) - 1.0))
    return ENERGY_FACTOR_MJ * 10.0 ** (ENERGY_SLOPE * (float(m) - 1.0))


def energy_to_magnitude(e):
    """Inverse of :func:`magnitude_to_energy`; E must be positive."""
    arr = np.asarray(e, dtype=float)
    if np.any(arr <= 0) or np.any(np.isnan(arr)):
        raise ValueError("energy must be positive")
    out = np.log10(arr / ENERGY_FACTOR_MJ) / ENERGY_SLOPE + 1.0
    return out if np.ndim(e) else float(out)


def log_energy(m):
    """Natural log of the energy, ln 2 + 1.5 ln 10 (M - 1); avoids overflow."""
    return math.log(ENERGY_FACTOR_MJ) + ENERGY_SLOPE * _LN10 * (np.asarray(m, dtype=float) - 1.0)


def log_energy_to_magnitude(log_e):
    return (np.asarray(log_e, dtype=float) - math.log(ENERGY_FACTOR_MJ)) / (ENERGY_SLOPE * _LN10) + 1.0
