from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

NO_FINITE_ENDPOINT = "no finite endpoint detected"
INFINITE_BOUND = "infinite bound"
INFINITE_PARAMETRIC_BOUND = "infinite parametric bound"
DEGENERATE_SPACING = "degenerate top spacing"


class EstimationError(RuntimeError):
    """An estimator could not produce a value (failed fit, divergence, ...)."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class EndpointResult:
    """One endpoint estimate, optionally with an upper confidence bound.

    ``estimate`` is the clamped value when clamping is on, ``raw`` is the
    unclamped one. ``xi``/``scale`` carry the tail fit when there is one
    (tau for the truncated GPD, the EVI for the truncated Pareto).
    """

    estimator: str
    k: int | None
    estimate: float
    raw: float
    upper_bound: float | None = None
    alpha: float | None = None
    xi: float | None = None
    scale: float | None = None
    d_t: float | None = None
    p_value: float | None = None
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.estimate)

    def with_bound(self, value: float, alpha: float, flag: str | None = None) -> "EndpointResult":
        flags = self.flags + ((flag,) if flag else ())
        return replace(self, upper_bound=value, alpha=alpha, flags=flags)


def clamp_result(estimator: str, k: int | None, raw: float, maximum: float, clamp: bool,
                 **extra) -> EndpointResult:
    flags = extra.pop("flags", ())
    if not math.isfinite(raw):
        flags = tuple(flags) + (NO_FINITE_ENDPOINT,)
        return EndpointResult(estimator, k, math.inf, math.inf, flags=flags, **extra)
    est = max(raw, maximum) if clamp else raw
    return EndpointResult(estimator, k, est, raw, flags=tuple(flags), **extra)
