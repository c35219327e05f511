import dataclasses
import json
import subprocess
import sys as _sys

import numpy as np
import pytest

from mcreach import cli, config as C
from mcreach.io import read_contours_csv, read_csv, read_jsonl
from mcreach.reach import solve_brt
from mcreach.systems import REGISTRY, quadratic_system

SMALL_DUBINS = {
    "system": {"name": "dubins"},
    "estimator": {"n_samples": 400},
    "eval": {"counts": [6, 5], "frozen": {"2": 0.0}},
    "schedule": {"count": 3},
    "picard": {"max_iter": 4},
}


def write_cfg(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_solve_outputs_round_trip(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, SMALL_DUBINS)
    out = tmp_path / "out"
    assert run("solve", "--config", cfg_path, "--output", out) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["runs"] == 1
    files = sorted(p.name for p in (out / "run").iterdir())
    assert files == ["contour.csv", "field_t000.csv", "field_t001.csv", "field_t002.csv", "tube.csv"]

    # values written equal an in-process solve bit for bit
    cfg = C.load_config(cfg_path)
    sys = C.build_system(cfg)
    es = C.build_eval_set(cfg, sys)
    tube = solve_brt(sys, C.build_estimator(cfg), es, C.build_schedule(cfg, 1.0), 1e-3, 4)
    header, data = read_csv(out / "run" / "tube.csv")
    assert header == ["x0", "x1", "x2", "value"]
    np.testing.assert_array_equal(data[:, :3], es.points)
    np.testing.assert_array_equal(data[:, 3], tube.tube_values)
    header, data = read_csv(out / "run" / "field_t000.csv")
    assert header[-3:] == ["dx0", "dx1", "dx2"]
    np.testing.assert_array_equal(data[:, 4:], tube.fields[0].gradients)

    lines = read_contours_csv(out / "run" / "contour.csv")
    assert all(line.shape[1] == 2 for line in lines)
    log = read_jsonl(out / "iterations.jsonl")
    assert log and {"k", "residual", "wall_ms", "t"} <= log[0].keys()
    raw = (out / "run" / "tube.csv").read_bytes()
    assert b"\r" not in raw


def test_csv_bytes_independent_of_threads(tmp_path):
    cfg_path = write_cfg(tmp_path, SMALL_DUBINS)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", "--config", cfg_path, "--output", a, "--threads", 1) == 0
    assert run("solve", "--config", cfg_path, "--output", b, "--threads", 4) == 0
    for f in sorted((a / "run").iterdir()):
        assert f.read_bytes() == (b / "run" / f.name).read_bytes(), f.name


def test_seed_flag_overrides(tmp_path):
    cfg_path = write_cfg(tmp_path, SMALL_DUBINS)
    run("solve", "--config", cfg_path, "--output", tmp_path / "s0")
    run("solve", "--config", cfg_path, "--output", tmp_path / "s1", "--seed", 1)
    assert (tmp_path / "s0/run/tube.csv").read_bytes() != (tmp_path / "s1/run/tube.csv").read_bytes()


def test_variants_get_own_directories(tmp_path):
    cfg = dict(SMALL_DUBINS, variants=[{"label": "theta 0"}, {"label": "theta pi/2", "eval": {"frozen": {"2": 1.5707963267948966}}}])
    assert run("solve", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 0
    assert (tmp_path / "o/theta_0/tube.csv").exists() and (tmp_path / "o/theta_pi_2/tube.csv").exists()


def test_self_compare_zero(tmp_path, capsys):
    cfg = dict(SMALL_DUBINS, compare={"self_compare": True})
    assert run("compare", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rec["l_inf"] == 0.0 and rec["l2_rel"] == 0.0
    assert read_jsonl(tmp_path / "o" / "metrics.jsonl")[0]["system"] == "dubins"


def test_compare_against_grid(tmp_path, capsys):
    cfg = {
        "system": {"name": "double_integrator"},
        "estimator": {"n_samples": 500},
        "eval": {"counts": [7, 7]},
        "schedule": {"count": 2},
        "picard": {"max_iter": 3},
        "compare": {"resolution": 41},
    }
    assert run("compare", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert np.isfinite(rec["l_inf"]) and rec["l2_rel"] > 0
    header, data = read_csv(tmp_path / "o" / "run" / "reference_grid.csv")
    assert header == ["x0", "x1", "value"] and len(data) == 41 * 41


def test_compare_rejects_high_dimension(tmp_path, capsys):
    cfg = {"system": {"name": "multiagent"}, "eval": {"type": "random", "count": 2}}
    assert run("compare", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 2
    assert "n <= 3" in capsys.readouterr().err


def test_invalid_system_exit_2(tmp_path, capsys):
    assert run("solve", "--config", write_cfg(tmp_path, {"system": {"name": "nope"}}), "--output", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "[system.name]" in err and "dubins" in err and "rockets" in err


@pytest.mark.parametrize("cfg,key", [
    ({"system": {"name": "dubins"}, "estimator": {"n_sample": 3}}, "estimator.n_sample"),
    ({"system": {"name": "dubins"}, "picard": {"mode": "XYZ"}}, "picard.mode"),
    ({"system": {"name": "dubins"}, "eval": {"type": "points", "points": [[0, 0]]}}, "eval.points"),
])
def test_config_errors_name_key(tmp_path, capsys, cfg, key):
    assert run("solve", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 2
    assert f"[{key}]" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run("solve", "--config", tmp_path / "missing.json") == 2


def test_concentration_default_scenario(tmp_path, capsys):
    assert run("concentration", "--config", write_cfg(tmp_path, {}), "--output", tmp_path / "o") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["pass"] is True and rec["N"] == 277
    assert rec["empirical_rate"] <= rec["bound"]
    assert json.loads((tmp_path / "o" / "concentration.json").read_text()) == rec


def test_concentration_zero_trials(tmp_path, capsys):
    cfg = {"concentration": {"trials": 0}}
    assert run("concentration", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 2
    assert "concentration.trials" in capsys.readouterr().err


def test_concentration_zero_eps(tmp_path, capsys):
    cfg = {"concentration": {"eps": 0.0, "n_samples": 100, "trials": 100}}
    assert run("concentration", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["bound"] == 1.0 and rec["pass"] is True


def test_numerical_failure_exit_3(tmp_path, capsys, monkeypatch):
    def broken(**_):
        base = quadratic_system(2)
        return dataclasses.replace(base, name="broken", terminal_cost=lambda x: np.full(np.shape(x)[:-1], np.nan))

    monkeypatch.setitem(REGISTRY, "broken", broken)
    cfg = {"system": {"name": "broken"}, "estimator": {"n_samples": 10}, "eval": {"counts": [2, 2]},
           "schedule": {"count": 1}}
    assert run("solve", "--config", write_cfg(tmp_path, cfg), "--output", tmp_path / "o") == 3
    assert "point" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([_sys.executable, "-m", "mcreach", "solve", "--config", str(tmp_path / "x.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "not found" in proc.stderr
