from __future__ import annotations

import hashlib
import json
import re
import shutil
import subprocess
import sys

import pytest

from _fixtures import wait_fixture
from icepath.cli import main
from icepath.env_data import load_dataset
from icepath.planner import PathBook, Waypoint, write_pathbook

REGION = "-66,-56,-60,-40,0.5"
ARTIFACTS = ["dataset.csv", "mesh.txt", "mesh.geojson", "pathbook.jsonl", "route.geojson", "reports.csv",
             "monthly.csv", "metrics.csv", "routes.csv"]


def _sha(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _waypoints(tmp) -> str:
    p = tmp / "wps.csv"
    p.write_text("id,lat,lon\nP,-58.25,-55.25\nQ,-57.25,-45.25\nR,-59.75,-42.25\n")
    return str(p)


def _pipeline(out, wps, speed="3"):
    common = ["--out", str(out), "--waypoints", wps, "--speed-kmh", speed]
    assert main(["synth", f"--region={REGION}", "--seed", "5", "--year", "y1", "--out", str(out)]) == 0
    for cmd in (["mesh"], ["pathbook"], ["plan", "--start", "P", "--goal", "Q", "--month", "1"],
                ["simulate"], ["report"]):
        assert main([*cmd, *common]) == 0, cmd


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    out = tmp / "run"
    _pipeline(out, _waypoints(tmp))
    return tmp, out


def test_synth_deterministic_and_row_count(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", f"--region={REGION}", "--seed", "9", "--out", str(out)]) == 0
    assert _sha(a / "dataset.csv") == _sha(b / "dataset.csv")
    ds = load_dataset(a / "dataset.csv")
    n_lat, n_lon = ds.region.n_lat, ds.region.n_lon
    land = int((~ds.present_points).sum())
    assert ds.n_samples == (n_lat * n_lon - land) * 365
    assert "static ice" not in capsys.readouterr().out
    assert main(["synth", f"--region={REGION}", "--seed", "9", "--out", str(a)]) == 0
    assert main(["synth", f"--region={REGION}", "--seed", "10", "--out", str(b)]) == 0
    assert _sha(a / "dataset.csv") != _sha(b / "dataset.csv")


def test_static_banner(tmp_path, capsys):
    assert main(["synth", f"--region={REGION}", "--ice-amplitude", "0", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("static ice")


def test_pipeline_artifacts(run_dir):
    _, out = run_dir
    for name in ARTIFACTS:
        assert (out / name).exists(), name
    cfg = json.loads((out / "run_config.json").read_text())
    assert set(cfg) == {"synth", "mesh", "pathbook", "plan", "simulate", "report"}
    assert cfg["pathbook"]["phi"] == 0.08 and cfg["pathbook"]["speed_kmh"] == 3.0
    ds_echo = cfg["pathbook"]["datasets"][0]
    assert ds_echo["name"] == "dataset.csv" and ds_echo["sha256"] == _sha(out / "dataset.csv")


def test_config_echo_in_artifacts(run_dir):
    _, out = run_dir
    for name in ("mesh.txt", "reports.csv", "monthly.csv", "metrics.csv", "routes.csv"):
        first = (out / name).read_text().splitlines()[0]
        assert first.startswith("# config {"), name
        assert '"homogeneity": "strong"' in first or '"psi"' in first
    head = json.loads((out / "pathbook.jsonl").read_text().splitlines()[0])
    assert head["config"]["homogeneity"] == "strong" and head["config"]["year"] == "y1"
    assert json.loads((out / "route.geojson").read_text())["config"]["command"] == "plan"
    assert json.loads((out / "mesh.geojson").read_text())["config"]["command"] == "mesh"


def test_reruns_are_byte_identical(run_dir):
    tmp, out = run_dir
    again = tmp / "again"
    _pipeline(again, _waypoints(tmp))
    for name in ARTIFACTS + ["run_config.json"]:
        assert _sha(out / name) == _sha(again / name), name


def test_plan_same_point(run_dir, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(run_dir[1], out)
    assert main(["plan", "--out", str(out), "--start", "P", "--goal", "P", "--month", "4"]) == 0
    doc = json.loads((out / "route.geojson").read_text())
    props = doc["features"][0]["properties"]
    assert props["total_hours"] == 0.0


def _book_dir(tmp_path, book) -> str:
    out = tmp_path / "run"
    out.mkdir()
    write_pathbook(book, out / "pathbook.jsonl")
    return str(out)


def test_compose_wait_fixture(tmp_path):
    out = _book_dir(tmp_path, wait_fixture())
    assert main(["compose", "--out", out, "--start", "C", "--goal", "B"]) == 0
    cal = (tmp_path / "run" / "calendar.txt").read_text().splitlines()
    marks = "".join("W" if "|~~~~|" in ln else "T" for ln in cal[2:])
    assert marks == "T" * 10 + "W" * 21 + "T" * 12
    journey = json.loads((tmp_path / "run" / "journey.json").read_text())["journey"]
    assert journey["duration"] == 43.0 and journey["waiting"] == 1


def test_report_on_empty_pathbook(tmp_path):
    book = PathBook({"homogeneity": "strong", "phi": 0.08, "speed_kmh": 1.0}, [Waypoint("a", -60, -40)])
    out = _book_dir(tmp_path, book)
    (tmp_path / "run" / "reports.csv").write_text(
        "route_id,planning_month,planning_year,simulation_year,travel_hours,risk_hours,risk_days,"
        "early_risk_days,no_data_legs\n")
    assert main(["report", "--out", out]) == 0
    routes = (tmp_path / "run" / "routes.csv").read_text().splitlines()
    assert routes[1:] == ["month,src,dst,travel_days,intra_risk_days"]
    metrics = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
    assert metrics[-1] == "strong,0.0800,1.000,0,0.000000,0.000000,0.000000,yes"


def test_crossing_debug(tmp_path):
    assert main(["crossing-debug", "--out", str(tmp_path), "--case", "1000,1000,0,0,0,0,0",
                 "--samples", "5", "--speed-kmh", "3.6"]) == 0
    lines = (tmp_path / "crossing.csv").read_text().splitlines()
    assert lines[1].startswith("# optimum y=")
    assert lines[2] == "y,t1,t2,total" and len(lines) == 8
    assert lines[5].startswith("0.0,1000.0,1000.0,2000.0")


ERROR_LINE = re.compile(r"^icepath: error: [a-z-]+: \S.*$")


@pytest.mark.parametrize("argv, code, kind", [
    (["mesh"], 1, "missing-artifact"),
    (["plan", "--start", "a", "--goal", "b", "--month", "1"], 1, "missing-artifact"),
    (["report"], 1, "missing-artifact"),
    (["synth", "--phi", "120"], 2, "usage"),
    (["synth", "--region", "1,2,3"], 2, "usage"),
    (["frobnicate"], 2, "usage"),
    (["crossing-debug", "--case", "1,2"], 2, "usage"),
    (["crossing-debug", "--case", "0,1,0,0,0,0,0"], 1, "config"),
])
def test_error_lines(tmp_path, capsys, argv, code, kind):
    got = main([*argv, "--out", str(tmp_path)])
    assert got == code
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and ERROR_LINE.match(err)
    assert err.startswith(f"icepath: error: {kind}:")


def test_config_errors(run_dir, capsys):
    _, out = run_dir
    assert main(["pathbook", "--out", str(out), "--speed-kmh", "-1"]) == 1
    assert "error: config:" in capsys.readouterr().err
    assert main(["pathbook", "--out", str(out), "--lb", "80", "--ub", "20"]) == 1
    assert "error: config:" in capsys.readouterr().err
    assert main(["plan", "--out", str(out), "--start", "P", "--goal", "Z", "--month", "1"]) == 1
    assert "unknown waypoint" in capsys.readouterr().err
    assert main(["plan", "--out", str(out), "--start", "P", "--goal", "Q", "--month", "13"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "icepath.cli", "report", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.startswith("icepath: error: missing-artifact:")
