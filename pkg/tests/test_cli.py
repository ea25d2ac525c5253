"""Command-line interface: subcommands, exit codes, printed output."""

import csv
import json
import os

import pytest
import yaml

from evcosim.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main


def write_scenario(path, duration_s=6.0, attack=True):
    doc = {
        "name": "cli-test",
        "grid": {"dt_s": 0.001, "duration_s": duration_s,
                 "preset": "low-inertia-evening", "under_hz": 57.0},
        "topology": {"stations": [
            {"cp_id": "evcs-bus5", "bus": 5, "aggregate_count": 2000,
             "connected_evs": 2000},
            {"cp_id": "evcs-bus6", "bus": 6, "aggregate_count": 2000,
             "connected_evs": 2000},
            {"cp_id": "evcs-bus8", "bus": 8, "aggregate_count": 2000,
             "connected_evs": 2000},
        ]},
    }
    if attack:
        doc["attack"] = {"start_s": 1.0, "waveform": "square",
                         "period_s": 5.0, "magnitude_mw": 90.0,
                         "buses": [5, 6, 8]}
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_run_reports_summary_and_writes_artifacts(tmp_path, capsys):
    scenario = write_scenario(tmp_path / "sc.yaml")
    out = tmp_path / "out"
    rc = main(["run", str(scenario), "-o", str(out)])
    assert rc == EXIT_OK
    printed = capsys.readouterr().out
    assert "peak |f-60|" in printed
    assert "attack edges" in printed
    assert (out / "telemetry.csv").exists()
    assert (out / "summary.json").exists()


def test_run_missing_file_is_a_config_error(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "nope.yaml")])
    assert rc == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_run_invalid_scenario_lists_violations(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({
        "name": "bad",
        "grid": {"mode": "warp", "duration_s": -1},
        "topology": {"stations": [
            {"cp_id": "x", "bus": 4, "aggregate_count": 1},
        ]},
    }), encoding="utf-8")
    rc = main(["run", str(path)])
    assert rc == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "grid.mode" in err
    assert "duration_s" in err
    assert "bus" in err


def test_gen_fleet_writes_profile(tmp_path, capsys):
    rc = main(["gen-fleet", "default", "7", "-o", str(tmp_path)])
    assert rc == EXIT_OK
    printed = capsys.readouterr().out
    assert "occupancy" in printed
    path = tmp_path / "fleet-profile-seed7.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["minute", "bus_id", "ev_count", "p_kw"]
    assert len(rows) == 1 + 1440 * 3


def test_gen_fleet_is_seed_deterministic(tmp_path):
    main(["gen-fleet", "default", "3", "-o", str(tmp_path / "a")])
    main(["gen-fleet", "default", "3", "-o", str(tmp_path / "b")])
    a = (tmp_path / "a" / "fleet-profile-seed3.csv").read_bytes()
    b = (tmp_path / "b" / "fleet-profile-seed3.csv").read_bytes()
    assert a == b


def test_gen_fleet_missing_params_file(tmp_path, capsys):
    rc = main(["gen-fleet", str(tmp_path / "none.csv"), "1"])
    assert rc == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_attack_demo_renders_plots(tmp_path, capsys):
    out = tmp_path / "demo"
    rc = main(["attack-demo", "-o", str(out)])
    assert rc == EXIT_OK
    printed = capsys.readouterr().out
    assert "blackout      yes" in printed
    for name in ("frequency.png", "ev-load.png", "telemetry.csv",
                 "attack.csv", "summary.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["peak_abs_dev_hz"] > 1.5


def test_plot_renders_both_images(tmp_path, capsys):
    scenario = write_scenario(tmp_path / "sc.yaml", duration_s=3.0)
    out = tmp_path / "out"
    main(["run", str(scenario), "-o", str(out)])
    capsys.readouterr()
    plot_dir = tmp_path / "plots"
    rc = main(["plot", str(out / "telemetry.csv"), "-o", str(plot_dir),
               "--under-hz", "57.0"])
    assert rc == EXIT_OK
    assert (plot_dir / "frequency.png").exists()
    assert (plot_dir / "ev-load.png").exists()


def test_plot_empty_telemetry_fails_without_artifacts(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    path.write_text("t_s,f_coi_hz,trip_flags\n", encoding="utf-8")
    rc = main(["plot", str(path), "-o", str(tmp_path / "plots")])
    assert rc == EXIT_FAILURE
    assert "no data rows" in capsys.readouterr().err
    assert not (tmp_path / "plots" / "frequency.png").exists()


def test_plot_missing_file_is_a_config_error(tmp_path, capsys):
    rc = main(["plot", str(tmp_path / "none.csv")])
    assert rc == EXIT_CONFIG


def test_app_unreachable_cms_fails(capsys):
    rc = main(["app", "status", "evcs-bus5",
               "--url", "http://127.0.0.1:1", "--timeout", "0.2"])
    assert rc == EXIT_FAILURE
    assert "unreachable" in capsys.readouterr().err


def test_unknown_subcommand_exits_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_CONFIG


def test_verbosity_env_var_sets_log_level(tmp_path, monkeypatch, capsys):
    import logging

    monkeypatch.setenv("EVCOSIM_LOG", "DEBUG")
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    main(["gen-fleet", "default", "1", "-o", str(tmp_path)])
    assert root.level == logging.DEBUG
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    root.setLevel(logging.WARNING)
