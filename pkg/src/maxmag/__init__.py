"""Estimators and upper bounds for the maximum possible earthquake magnitude."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .catalog import MagnitudeSample, build_sample, read_catalog  # noqa: E402
from .estimate import ESTIMATORS, run_bounds, run_estimators  # noqa: E402
from .results import EndpointResult, EstimationError  # noqa: E402

__all__ = [
    "EndpointResult",
    "ESTIMATORS",
    "EstimationError",
    "MagnitudeSample",
    "build_sample",
    "read_catalog",
    "run_bounds",
    "run_estimators",
]
