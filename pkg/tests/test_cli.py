import csv
import json
import shlex
import subprocess
import sys

import numpy as np
import pytest

from maxmag import io as mio
from maxmag.cli import main
from maxmag.simulation import TruncatedGRParams


@pytest.fixture
def sample_file(tmp_path):
    # GR quantiles plus a 3.6 event; the Pisarenko threshold sits near 0.068
    p = TruncatedGRParams(2.1203, 1.5, 3.75)
    x = np.append(p.quantile((np.arange(1, 250) - 0.5) / 249), 3.6)
    return mio.write_sample(tmp_path / "mags.csv", x)


@pytest.fixture
def catalog_file(tmp_path):
    rng = np.random.default_rng(3)
    mags = np.round(1.0 + rng.exponential(1 / 2.1, size=400), 1)
    lines = ["date,lat,lon,mag"]
    for i, m in enumerate(mags):
        lat, lon = (53.3, 6.7) if i % 5 else (52.0, 5.0)
        lines.append(f"2005-01-{1 + i % 28:02d},{lat},{lon},{m}")
    path = tmp_path / "catalog.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_file_exits_nonzero(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["catalog", "--input", str(missing), "--out-dir", str(tmp_path / "o")]) != 0
    assert str(missing) in capsys.readouterr().err


def test_catalog_command(catalog_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["catalog", "--input", str(catalog_file), "--groningen", "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    vals = mio.read_sample(out / "sample.csv")
    assert summary["n"] == vals.size and vals.min() >= 1.5
    assert summary["events_after_filter"] == 320
    assert f"n = {vals.size}" in capsys.readouterr().out
    assert np.all(np.diff(vals) > 0)


def test_catalog_seed_determinism(catalog_file, tmp_path):
    for name in ("a", "b"):
        main(["catalog", "--input", str(catalog_file), "--seed", "5", "--out-dir", str(tmp_path / name)])
    assert (tmp_path / "a" / "sample.csv").read_bytes() == (tmp_path / "b" / "sample.csv").read_bytes()


def test_estimate_single_estimator(sample_file, tmp_path):
    out = tmp_path / "o"
    assert main(["estimate", "--sample", str(sample_file), "--estimators", "rw", "--out-dir", str(out)]) == 0
    rows = read_csv(out / "estimates.csv")
    assert len(rows) == 1 and rows[0]["estimator"] == "rw"
    x = np.sort(mio.read_sample(sample_file))
    assert float(rows[0]["endpoint_raw"]) == pytest.approx(2 * x[-1] - x[-2], rel=1e-5)


def test_estimate_default_grid(sample_file, tmp_path):
    out = tmp_path / "o"
    assert main(["estimate", "--sample", str(sample_file), "--estimators", "tpareto,fl",
                 "--out-dir", str(out)]) == 0
    rows = read_csv(out / "estimates.csv")
    pareto = [int(r["k"]) for r in rows if r["estimator"] == "truncated_pareto"]
    assert pareto == list(range(5, 250))
    assert [int(r["k"]) for r in rows if r["estimator"] == "fl"] == [250]


def test_empty_sample_exits_nonzero(tmp_path):
    low = tmp_path / "low.txt"
    low.write_text("1.0\n1.2\n")
    assert main(["estimate", "--sample", str(low), "--out-dir", str(tmp_path / "o")]) != 0


def test_bad_alpha_is_argument_error(sample_file, tmp_path, capsys):
    for bad in ("0", "1", "1.5", "x"):
        with pytest.raises(SystemExit) as info:
            main(["bounds", "--sample", str(sample_file), "--alpha", bad, "--out-dir", str(tmp_path)])
        assert info.value.code == 2


def test_bounds_infinite_pisarenko(sample_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["bounds", "--sample", str(sample_file), "--alpha", "0.05", "--k", "125",
                 "--out-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert any(line.startswith("Pisarenko") and line.split()[-1] == "inf" for line in printed.splitlines())
    rows = {r["estimator"]: r for r in read_csv(out / "bounds.csv")}
    assert set(rows) == {"truncated_gpd", "truncated_pareto", "npos", "ks"}
    assert rows["ks"]["upper_bound"] == "inf"
    assert main(["bounds", "--sample", str(sample_file), "--alpha", "0.1", "--out-dir", str(out)]) == 0
    assert read_csv(out / "bounds.csv")[-1]["upper_bound"] != "inf"


def test_diagnose_constant_sample_mean_excess(tmp_path):
    const = tmp_path / "const.txt"
    const.write_text("2.0\n" * 30)
    out = tmp_path / "o"
    assert main(["diagnose", "--sample", str(const), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "mean_excess.csv")
    assert rows and all(float(r["y"]) == 0.0 for r in rows)


def test_diagnose_outputs_and_row_order(catalog_file, tmp_path):
    lines = catalog_file.read_text().splitlines()
    shuffled = tmp_path / "shuffled.csv"
    rest = lines[1:]
    np.random.default_rng(0).shuffle(rest)
    shuffled.write_text("\n".join([lines[0], *rest]) + "\n")
    names = ("qq_exponential.csv", "qq_pareto.csv", "mean_excess.csv", "tail.csv", "tests.csv")
    for src, tag in ((catalog_file, "a"), (shuffled, "b")):
        assert main(["diagnose", "--input", str(src), "--k-grid", "10:60:10",
                     "--out-dir", str(tmp_path / tag)]) == 0
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    tests = read_csv(tmp_path / "a" / "tests.csv")
    assert {r["kind"] for r in tests} == {"p_gpd", "p_pareto"}
    assert all(0 < float(r["y"]) <= 1 for r in tests)


def test_manifest_lists_outputs_and_reproduces(sample_file, tmp_path):
    out = tmp_path / "o"
    assert main(["bounds", "--sample", str(sample_file), "--out-dir", str(out)]) == 0
    manifest = mio.read_manifest(out / "manifest.txt")
    for name in ("bounds.csv", "summary.json"):
        assert manifest[f"output.{name}.sha256"] == mio.sha256(out / name)
    assert manifest["input.sample.sha256"] == mio.sha256(sample_file)
    assert manifest["config.alpha"] == "0.1" and manifest["config.seed"] == "1"
    assert "started" in manifest and "finished" in manifest
    argv = shlex.split(manifest["argv"])[1:]
    again = tmp_path / "again"
    argv[argv.index("--out-dir") + 1] = str(again)
    assert main(argv) == 0
    for name in ("bounds.csv", "summary.json"):
        assert mio.sha256(again / name) == manifest[f"output.{name}.sha256"]


def test_simulate_single_replicate(tmp_path):
    out = tmp_path / "o"
    args = ["simulate", "--replicates", "1", "--sample-size", "40", "--k-grid", "10,20",
            "--T-M", "3.75", "--estimators", "npos,rw,ks,tpareto", "--quiet", "--out-dir", str(out)]
    assert main(args) == 0
    for metric in ("relative_mean", "relative_mse", "coverage"):
        rows = read_csv(out / f"{metric}_T3.75.csv")
        assert rows and all(r["replicates_used"] in ("0", "1") for r in rows)
    manifest = mio.read_manifest(out / "manifest.txt")
    assert manifest["config.seed"] == "20170101"
    assert "output.coverage_T3.75.csv.sha256" in manifest


def test_simulate_seed_determinism(tmp_path):
    common = ["simulate", "--replicates", "3", "--sample-size", "40", "--k-grid", "10",
              "--T-M", "3.75,4.5", "--estimators", "npos,fl,tpareto", "--seed", "11", "--quiet"]
    assert main([*common, "--out-dir", str(tmp_path / "a")]) == 0
    assert main([*common, "--jobs", "2", "--out-dir", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(files) == 6
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_rejects_bad_config(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--replicates", "0", "--out-dir", str(tmp_path)])
    assert info.value.code == 2


def test_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "maxmag.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("maxmag")
