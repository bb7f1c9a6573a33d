"""Command-line interface: exit codes, headless runs, reproducibility."""

import json
import socket
import subprocess
import sys
import time

import pytest

from labkit.cli import main
from labkit.recorder import load_data
from labkit.remote.client import Connection

REPO_EXAMPLE = "examples/odmr_lab.json"


def write_config(tmp_path, name="lab.json", *, seed=123, startup=(),
                 noise=True, extra_modules=()):
    cfg = {
        "modules": [
            {"name": "mw", "layer": "hardware", "kind": "sim_microwave",
             "options": {"frequency_limits": [1.0e9, 6.0e9]}},
            {"name": "scanner", "layer": "hardware", "kind": "sim_scanner",
             "options": {"microwave": "mw", "noise": noise}},
            {"name": "confocal", "layer": "logic", "kind": "confocal_logic",
             "connectors": {"scanner": "scanner"}},
            {"name": "odmr", "layer": "logic", "kind": "odmr_logic",
             "connectors": {"scanner": "scanner", "microwave": "mw"}},
            {"name": "recorder", "layer": "logic", "kind": "recorder"},
            {"name": "task", "layer": "logic", "kind": "multispot_task",
             "connectors": {"confocal": "confocal", "odmr": "odmr",
                            "recorder": "recorder"}},
            *extra_modules,
        ],
        "startup": list(startup),
        "log_path": str(tmp_path / "labkit.log"),
        "data_dir": str(tmp_path / "data"),
        "seed": seed,
    }
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


# -- validate -------------------------------------------------------------------


def test_validate_shipped_example_config(capsys):
    assert main(["validate", "--config", REPO_EXAMPLE]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok: ")


def test_validate_reports_layer_violation(tmp_path, capsys):
    path = write_config(tmp_path, extra_modules=[
        {"name": "panel", "layer": "gui", "kind": "confocal_logic",
         "connectors": {"scanner": "scanner"}}])
    assert main(["validate", "--config", path]) == 1
    assert "LAYER_GUI_TO_HW" in capsys.readouterr().out


def test_validate_malformed_json(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text('{"modules": [,]}')
    assert main(["validate", "--config", bad.as_posix()]) == 1
    assert "PARSE_ERROR" in capsys.readouterr().out


def test_validate_missing_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 1


def test_headless_on_invalid_config_exits_1(tmp_path, capsys):
    path = write_config(tmp_path, extra_modules=[
        {"name": "panel", "layer": "gui", "kind": "confocal_logic",
         "connectors": {"scanner": "scanner"}}])
    code = main(["scan", "--config", path, "--plane", "xy",
                 "--center", "10,10,5", "--extent", "2,2",
                 "--res", "5,5", "--out", "t"])
    assert code == 1


# -- headless scan ----------------------------------------------------------------


def test_scan_writes_data_and_svg(tmp_path, capsys):
    path = write_config(tmp_path)
    code = main(["scan", "--config", path, "--plane", "xy",
                 "--center", "10,10,5", "--extent", "4,4",
                 "--res", "12,10", "--dwell", "0.0005", "--out", "fov"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    dat_path, svg_path, summary = lines
    assert dat_path.endswith(".dat") and svg_path.endswith(".svg")
    assert summary.startswith("scan: 12x10 xy")
    meta, cols = load_data(dat_path)
    assert meta["nx"] == "12" and meta["ny"] == "10"
    assert len(cols) == 12
    assert all(len(v) == 10 for v in cols.values())
    assert "<svg" in open(svg_path).read()


def test_scan_bad_flag_shapes_exit_1(tmp_path):
    path = write_config(tmp_path)
    base = ["scan", "--config", path, "--plane", "xy", "--out", "t"]
    assert main(base + ["--center", "10,10", "--extent", "2,2",
                        "--res", "5,5"]) == 1
    assert main(base + ["--center", "10,10,5", "--extent", "2,x",
                        "--res", "5,5"]) == 1
    assert main(base + ["--center", "10,10,5", "--extent", "2,2",
                        "--res", "5.5,5"]) == 1


# -- headless odmr -----------------------------------------------------------------


ODMR_ARGS = ["--start", "2.85e9", "--stop", "2.89e9", "--points", "41",
             "--sweeps", "2", "--dwell", "0.001", "--out", "res"]


def run_odmr(tmp_path, capsys, run_name, seed_flag):
    path = write_config(tmp_path / run_name)
    (tmp_path / run_name).mkdir(exist_ok=True)
    code = main(["odmr", "--config", path, "--seed", seed_flag,
                 "--at", "10,10,5"] + ODMR_ARGS)
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    return lines[0], lines[1], lines[2]


def test_odmr_reruns_are_byte_identical(tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    dat_a, svg_a, fit_a = run_odmr(tmp_path, capsys, "a", "777")
    dat_b, svg_b, fit_b = run_odmr(tmp_path, capsys, "b", "777")
    assert open(dat_a, "rb").read() == open(dat_b, "rb").read()
    assert open(svg_a, "rb").read() == open(svg_b, "rb").read()
    assert fit_a == fit_b
    assert fit_a.startswith("fit: f0 2.8")


def test_odmr_seed_changes_the_data(tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    dat_a, _, _ = run_odmr(tmp_path, capsys, "a", "1")
    dat_b, _, _ = run_odmr(tmp_path, capsys, "b", "2")
    _, cols_a = load_data(dat_a)
    _, cols_b = load_data(dat_b)
    assert cols_a["frequency_hz"] == cols_b["frequency_hz"]
    assert cols_a["mean_rate_counts_per_s"] != cols_b["mean_rate_counts_per_s"]


def test_odmr_flat_window_reports_failed_fit(tmp_path, capsys):
    # noise-free far from any resonance: constant data, degenerate fit
    path = write_config(tmp_path, noise=False)
    code = main(["odmr", "--config", path, "--at", "10,10,5",
                 "--start", "4.5e9", "--stop", "4.6e9", "--points", "21",
                 "--sweeps", "1", "--dwell", "0.0005", "--out", "flat"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[2] == "fit: none (fit failed or degenerate data)"
    meta, _ = load_data(out[0])
    assert "fit_f0_hz" not in meta


def test_odmr_cursor_outside_volume_is_runtime_failure(tmp_path):
    path = write_config(tmp_path)
    code = main(["odmr", "--config", path, "--at", "25,10,5"] + ODMR_ARGS)
    assert code == 2


# -- multispot ---------------------------------------------------------------------


def test_multispot_reports_skips_and_measurements(tmp_path, capsys):
    path = write_config(tmp_path)
    spots = tmp_path / "spots.txt"
    spots.write_text("# one real emitter, one empty patch\n"
                     "5.1 4.9 5.0\n"
                     "2.0 2.0 5.0\n")
    code = main(["multispot", "--config", path, "--spots", str(spots),
                 "--start", "2.85e9", "--stop", "2.89e9", "--points", "41",
                 "--sweeps", "1", "--dwell", "0.001"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert any(line.endswith(".dat") for line in out)
    assert "spot 1: optimization rejected, skipped" in out
    assert out[-1] == "multispot: 1/2 spots measured"


def test_multispot_bad_spots_file(tmp_path):
    path = write_config(tmp_path)
    spots = tmp_path / "spots.txt"
    spots.write_text("1.0 2.0\n")
    assert main(["multispot", "--config", path, "--spots", str(spots)]) == 1


# -- serve -------------------------------------------------------------------------


def test_serve_refuses_non_loopback_without_allow_remote(tmp_path):
    path = write_config(tmp_path)
    assert main(["serve", "--config", path,
                 "--listen", "0.0.0.0:8123"]) == 1


def test_serve_bind_conflict_exits_3(tmp_path):
    path = write_config(tmp_path)
    blocker = socket.create_server(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        assert main(["serve", "--config", path,
                     "--listen", f"127.0.0.1:{port}"]) == 3
    finally:
        blocker.close()


def test_serve_smoke_over_loopback(tmp_path):
    path = write_config(tmp_path, startup=("confocal",))
    proc = subprocess.Popen(
        [sys.executable, "-m", "labkit.cli", "serve", "--config", path,
         "--listen", "127.0.0.1:0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline().strip()
        assert line.startswith("serving on 127.0.0.1:")
        port = int(line.rpartition(":")[2])
        with Connection("127.0.0.1", port) as conn:
            position = conn.request("scanner", "get_position")
            assert set(position) == {"x", "y", "z"}
            states = {m["name"]: m["state"]
                      for m in conn.request("@kernel", "list_modules")}
            assert states["confocal"] == "active_idle"
    finally:
        proc.terminate()
        proc.wait(timeout=10)
