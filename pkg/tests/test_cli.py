"""Command-line regression tests: exit codes and the files each subcommand writes."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import app  # noqa: E402
from heatlab.config import OUT_ENV  # noqa: E402
from heatlab.errors import NumericalFailure  # noqa: E402
from heatlab.osgood import PhiValue  # noqa: E402


@pytest.fixture(autouse=True)
def _no_out_env(monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)


def _manifest_names(out: Path):
    document = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return [entry["name"] for entry in document["files"]]


def test_kernel_writes_reports_and_manifest(tmp_path):
    out = tmp_path / "kernel"
    code = app.main(["kernel", "--out", str(out), "--domain", "interval:0.5", "--plot", "--quiet"])
    assert code == app.EXIT_OK
    for name in ("config.txt", "kernel.csv", "kernel.json", "kernel.svg", "manifest.json"):
        assert (out / name).exists(), name
    assert set(_manifest_names(out)) == {"config.txt", "kernel.csv", "kernel.json", "kernel.svg"}
    with (out / "kernel.csv").open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 1 + 21
    summary = json.loads((out / "kernel.json").read_text(encoding="utf-8"))["report"]
    assert summary["dominates"] is True


def test_kernel_rejects_box_domain(tmp_path):
    assert app.main(["kernel", "--out", str(tmp_path), "--domain", "box:1,1", "--quiet"]) == app.EXIT_INVALID


def test_box_sweep_passes(tmp_path):
    code = app.main(["bounds-sweep", "--out", str(tmp_path), "--box", "1,1", "--points", "3", "--times", "3", "--quiet"])
    assert code == app.EXIT_OK
    report = json.loads((tmp_path / "sweep.json").read_text(encoding="utf-8"))["report"]
    assert report["violation_count"] == 0
    assert report["evaluated"] > 0


def test_env_out_dir_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "from-env"))
    code = app.main(["osgood", "--out", str(tmp_path / "from-flag"), "--terms", "10", "--quiet"])
    assert code == app.EXIT_OK
    assert (tmp_path / "from-env" / "osgood.csv").exists()
    assert not (tmp_path / "from-flag").exists()


def test_osgood_checks_pass(tmp_path):
    assert app.main(["osgood", "--out", str(tmp_path), "--terms", "10", "--quiet"]) == app.EXIT_OK
    checks = json.loads((tmp_path / "osgood.json").read_text(encoding="utf-8"))["report"]
    assert checks["passed"] is True
    assert checks["witness_finite"] is True
    with (tmp_path / "osgood.csv").open(newline="", encoding="utf-8") as handle:
        assert len(list(csv.reader(handle))) == 1 + 10


@pytest.mark.parametrize(
    "argv",
    [
        ["blowup", "--J", "64"],
        ["kernel", "--domain", "disc:1"],
        ["blowup", "--caps", "100,10"],
    ],
)
def test_invalid_configuration_exits_with_two(tmp_path, argv):
    assert app.main(argv + ["--out", str(tmp_path), "--quiet"]) == app.EXIT_INVALID


def test_config_file_is_read_before_flags(tmp_path):
    config_path = tmp_path / "run.cfg"
    config_path.write_text("command = osgood\nosgood_terms = 5\n", encoding="utf-8")
    out = tmp_path / "out"
    assert app.main(["osgood", "--config", str(config_path), "--out", str(out), "--terms", "7", "--quiet"]) == app.EXIT_OK
    written = (out / "config.txt").read_text(encoding="utf-8")
    assert "osgood_terms = 7" in written


def test_numerical_failure_exits_with_three(tmp_path, monkeypatch):
    def _fail(*args, **kwargs):
        raise NumericalFailure("quadrature did not converge")

    monkeypatch.setattr(app, "bound_profile", _fail)
    assert app.main(["kernel", "--out", str(tmp_path), "--quiet"]) == app.EXIT_NUMERICAL


def test_bound_violation_exits_with_one(tmp_path, monkeypatch):
    from heatlab import bounds

    monkeypatch.setattr(bounds, "BETA", 1.5)
    code = app.main(["bounds-sweep", "--out", str(tmp_path), "--domain", "interval:0.5", "--points", "5", "--times", "5", "--quiet"])
    assert code == app.EXIT_VIOLATION


def _manifest(out: Path):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


def test_successful_run_records_exit_code(tmp_path):
    assert app.main(["osgood", "--out", str(tmp_path), "--terms", "5", "--quiet"]) == app.EXIT_OK
    document = _manifest(tmp_path)
    assert document["exit_code"] == app.EXIT_OK
    assert document["error"] is None


def test_invalid_request_still_writes_manifest(tmp_path):
    code = app.main(["prop-ball", "--out", str(tmp_path), "--alpha", "1.5", "--quiet"])
    assert code == app.EXIT_INVALID
    document = _manifest(tmp_path)
    assert document["exit_code"] == app.EXIT_INVALID
    assert "alpha" in document["error"]
    assert [entry["name"] for entry in document["files"]] == ["config.txt"]


def test_numerical_failure_still_writes_manifest(tmp_path, monkeypatch):
    def _fail(*args, **kwargs):
        raise NumericalFailure("quadrature did not converge")

    monkeypatch.setattr(app, "bound_profile", _fail)
    assert app.main(["kernel", "--out", str(tmp_path), "--quiet"]) == app.EXIT_NUMERICAL
    document = _manifest(tmp_path)
    assert document["exit_code"] == app.EXIT_NUMERICAL
    assert document["error"] == "quadrature did not converge"


def test_reports_are_identical_across_output_directories(tmp_path):
    first, second = tmp_path / "one", tmp_path / "nested" / "two"
    for out in (first, second):
        assert app.main(["osgood", "--out", str(out), "--terms", "8", "--quiet"]) == app.EXIT_OK
    for name in ("osgood.csv", "osgood.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    hashes = [{e["name"]: e["sha256"] for e in _manifest(out)["files"]} for out in (first, second)]
    assert hashes[0]["osgood.json"] == hashes[1]["osgood.json"]


def test_flat_growth_fails_the_osgood_checks(monkeypatch):
    monkeypatch.setattr(app, "growth_margin", lambda gamma, i: PhiValue(i, 0, 1.0))
    checks = app.osgood_checks(terms=10)
    assert checks["growth_ok"] is False
    assert checks["passed"] is False


def test_power_like_growth_fails_the_osgood_checks(monkeypatch):
    # A source like s^2 beats phi^gamma only for gamma < 2.
    monkeypatch.setattr(app, "growth_margin", lambda gamma, i: PhiValue(i, 0, (2.0 - gamma) * i))
    assert app.growth_increasing(1.0, 10)
    assert not app.growth_increasing(5.0, 10)
    assert app.osgood_checks(terms=10)["growth_ok"] is False


def test_prop_ball_end_to_end(tmp_path):
    code = app.main([
        "prop-ball", "--out", str(tmp_path), "--domain", "interval:1.0", "--alpha", "0.5", "--R", "0.5",
        "--phis", "4,8,16,32,64", "--panels", "256", "--iterations", "32", "--time-levels", "4", "--plot", "--quiet",
    ])
    assert code == app.EXIT_OK
    report = json.loads((tmp_path / "certificate.json").read_text(encoding="utf-8"))["report"]
    assert report["passed"] is True
    p_r, p_t = report["fitted_exponents"]
    assert p_r == pytest.approx(-2.0, rel=0.10)
    assert p_t == pytest.approx(-4.0, rel=0.10)
    with (tmp_path / "certificate.csv").open(newline="", encoding="utf-8") as handle:
        assert len(list(csv.reader(handle))) == 1 + 5
    assert set(_manifest_names(tmp_path)) == {"config.txt", "certificate.csv", "certificate.json", "certificate.svg"}


def test_blowup_control_end_to_end(tmp_path):
    code = app.main([
        "blowup", "--out", str(tmp_path), "--p", "2", "--caps", "10,100,1000", "--J", "128",
        "--workers", "2", "--stride", "20", "--plot", "--quiet",
    ])
    assert code == app.EXIT_OK
    report = json.loads((tmp_path / "blowup.json").read_text(encoding="utf-8"))["report"]
    assert report["regime"] == "local-existence"
    assert report["verdict"] is True
    assert report["ladder_monotone"] is True
    with (tmp_path / "blowup.csv").open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["M", "I", "blew_up", "t_blowup"]
    assert [float(row[0]) for row in rows[1:]] == [10.0, 100.0, 1000.0]
    assert (tmp_path / "trajectory.csv").exists()
    assert (tmp_path / "blowup.svg").exists()


def test_verify_all_quick_passes(tmp_path):
    code = app.main(["verify-all", "--quick", "--out", str(tmp_path), "--workers", "2", "--quiet"])
    checks = json.loads((tmp_path / "verify.json").read_text(encoding="utf-8"))["report"]
    assert checks["failed"] == []
    assert code == app.EXIT_OK
    assert checks["blowup"]["control"]["verdict"] is True
    assert abs(checks["bound_profile"]["refined_peak_x"] - 0.2) <= checks["bound_profile"]["peak_tolerance"]
    assert _manifest(tmp_path)["exit_code"] == app.EXIT_OK
