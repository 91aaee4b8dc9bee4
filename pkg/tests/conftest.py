import os
import sys
from pathlib import Path

import numpy as np
import pytest

from maxmag.catalog import MagnitudeSample
from maxmag.simulation import TruncatedGRParams, sample_truncated_gr

DATA = Path(__file__).parent / "data"
GRONINGEN_ENV = "MAXMAG_GRONINGEN_CATALOG"


def groningen_catalog_path() -> Path | None:
    """Bundled KNMI export, or the file named by $MAXMAG_GRONINGEN_CATALOG."""
    env = os.environ.get(GRONINGEN_ENV)
    candidates = [Path(env)] if env else []
    candidates.append(DATA / "groningen_knmi.csv")
    for path in candidates:
        if path.is_file():
            return path
    return None


@pytest.fixture
def gr_sample():
    return sample_truncated_gr(TruncatedGRParams(2.1203, 1.5, 3.75), 250, 12345)


@pytest.fixture
def small_sample():
    return MagnitudeSample.from_values([1.5, 1.62, 1.71, 1.9, 2.05, 2.2, 2.41, 2.6, 2.95, 3.3, 3.6], 1.5)


def gr_draw(T_M=3.75, n=250, seed=0, beta=2.1203, t_M=1.5):
    return sample_truncated_gr(TruncatedGRParams(beta, t_M, T_M), n, seed)


def as_sample(values, t_M=None):
    values = np.asarray(values, dtype=float)
    return MagnitudeSample.from_values(values, float(values.min()) if t_M is None else t_M)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
