"""Command line interface: config validation, outputs, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

PI = 3.141592653589793


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "lagtransport.cli", *args],
        capture_output=True,
        text=True,
    )


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def flow_config():
    return {
        "schema_version": 1,
        "field": {"name": "logistic", "params": {"k": 1, "mu": 0.3}},
        "grid": {
            "x_bounds": [[-PI, PI]],
            "x_counts": [9],
            "r_bounds": [[0.1, 0.9]],
            "r_counts": [5],
            "time_nodes": {"start": 0.0, "stop": 0.3, "num": 4},
        },
    }


def solve_config():
    return {
        "schema_version": 1,
        "field": {"name": "zero", "params": {"n": 1, "j": 1}},
        "kernel": {"name": "separable"},
        "grid": {
            "x_bounds": [[0.0, 1.0]],
            "x_counts": [2],
            "r_bounds": [[0.0, 1.0]],
            "r_counts": [17],
            "time_nodes": [0.0, 0.5],
        },
        "initial": {"name": "gaussian", "params": {"x_center": 0.5}},
        "t_end": 0.5,
        "solver": {"picard_tol": 1e-9, "nodes_per_slab": 9},
    }


def verify_config():
    return {
        "schema_version": 1,
        "field": {"name": "logistic", "params": {"k": 2, "mu": 0.3}},
        "grid": {
            "x_bounds": [[-PI, PI]],
            "x_counts": [33],
            "r_bounds": [[0.05, 0.95]],
            "r_counts": [17],
            "time_nodes": [0.0, 0.5],
        },
        "t": 0.5,
    }


# ---------------------------------------------------------------------
# happy paths
# ---------------------------------------------------------------------


def test_flow_writes_hashed_outputs(tmp_path):
    cfg = write_config(tmp_path / "flow.json", flow_config())
    res = run_cli("flow", "--config", cfg, "--out", str(tmp_path / "out"))
    assert res.returncode == 0, res.stderr
    csvs = list((tmp_path / "out").glob("flow_*.csv"))
    jsons = list((tmp_path / "out").glob("flow_*.json"))
    assert len(csvs) == 1 and len(jsons) == 1
    assert csvs[0].stem == jsons[0].stem
    payload = json.loads(jsons[0].read_text())
    assert payload["density_bounds_ok"] is True
    assert payload["command"] == "flow"
    rows = np.loadtxt(csvs[0], delimiter=",", skiprows=1)
    assert rows.shape[1] == 7  # label, t, position, logJ1, logJ


def test_flow_output_name_depends_on_config(tmp_path):
    cfg_a = write_config(tmp_path / "a.json", flow_config())
    payload = flow_config()
    payload["grid"]["x_counts"] = [11]
    cfg_b = write_config(tmp_path / "b.json", payload)
    out = str(tmp_path / "out")
    assert run_cli("flow", "--config", cfg_a, "--out", out).returncode == 0
    assert run_cli("flow", "--config", cfg_b, "--out", out).returncode == 0
    assert len(list((tmp_path / "out").glob("flow_*.json"))) == 2


def test_solve_reports_mass_history(tmp_path):
    cfg = write_config(tmp_path / "solve.json", solve_config())
    res = run_cli("solve", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 0, res.stderr
    payload = json.loads(next(tmp_path.glob("solve_*.json")).read_text())
    assert payload["run"]["kernel"] == "separable"
    masses = payload["masses"]
    assert len(masses) == len(payload["mass_times"])
    # positive separable kernel grows the total mass
    assert masses[-1] > masses[0]
    for slab in payload["run"]["slabs"]:
        assert slab["residual"] <= 2e-9


def test_counterexample_subcommand(tmp_path):
    cfg = write_config(
        tmp_path / "ce.json",
        {"schema_version": 1, "k_values": [2, 4], "line_nodes": 1025},
    )
    res = run_cli("counterexample", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 0, res.stderr
    payload = json.loads(next(tmp_path.glob("counterexample_*.json")).read_text())
    assert payload["passed"] is True


def test_verify_battery_passes_at_default_scale(tmp_path):
    cfg = write_config(tmp_path / "verify.json", verify_config())
    res = run_cli("verify", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 0, res.stderr
    payload = json.loads(next(tmp_path.glob("verify_*.json")).read_text())
    assert payload["passed"] is True
    names = set(payload["checks"])
    assert {
        "semigroup", "inverse_round_trip", "density_bounds",
        "change_of_variables_marginal", "change_of_variables_joint",
        "oracle_equivalence", "mass_law",
    } <= names


# ---------------------------------------------------------------------
# verdict failures (exit 1)
# ---------------------------------------------------------------------


def test_verify_fails_when_tolerances_scaled_down(tmp_path):
    payload = verify_config()
    payload["tolerance_scale"] = 0.1
    cfg = write_config(tmp_path / "verify.json", payload)
    res = run_cli("verify", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 1
    out = json.loads(next(tmp_path.glob("verify_*.json")).read_text())
    assert out["passed"] is False
    failing = [n for n, c in out["checks"].items() if not c["passed"]]
    assert failing  # the scaled-down windows expose the real margins


def test_counterexample_fails_with_impossible_floor(tmp_path):
    cfg = write_config(
        tmp_path / "ce.json",
        {
            "schema_version": 1,
            "k_values": [2, 4],
            "line_nodes": 1025,
            "floor_fraction": 1.5,
        },
    )
    res = run_cli("counterexample", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 1


# ---------------------------------------------------------------------
# config rejection (exit 2)
# ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update({"bogus": 1}),
        lambda c: c["grid"].update({"extra_key": True}),
        lambda c: c.update({"schema_version": 99}),
        lambda c: c.pop("field"),
        lambda c: c["grid"].update({"x_bounds": [[1.0, -1.0]]}),
        lambda c: c["field"].update({"name": "no_such_field"}),
    ],
)
def test_bad_configs_exit_2(tmp_path, mutate):
    payload = flow_config()
    mutate(payload)
    cfg = write_config(tmp_path / "bad.json", payload)
    res = run_cli("flow", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 2, res.stderr
    assert "config error" in res.stderr
    # nothing may be written for a rejected config
    assert not list(tmp_path.glob("flow_*.json"))


def test_malformed_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    res = run_cli("flow", "--config", str(bad), "--out", str(tmp_path))
    assert res.returncode == 2


def test_missing_config_file_exits_2(tmp_path):
    res = run_cli("flow", "--config", str(tmp_path / "nope.json"))
    assert res.returncode == 2


def test_unknown_kernel_param_exits_2(tmp_path):
    payload = solve_config()
    payload["kernel"] = {"name": "fragmentation", "params": {"scale": 2.0, "x": 1}}
    cfg = write_config(tmp_path / "s.json", payload)
    res = run_cli("solve", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 2


def test_unknown_subcommand_exits_2(tmp_path):
    res = run_cli("explode", "--config", "x.json")
    assert res.returncode == 2


# ---------------------------------------------------------------------
# numerical failure (exit 3)
# ---------------------------------------------------------------------


def test_unreachable_slab_budget_exits_3(tmp_path):
    payload = solve_config()
    payload["kernel"] = {"name": "constant", "params": {"c": 50.0}}
    payload["solver"] = {"max_halvings": 1}
    cfg = write_config(tmp_path / "s.json", payload)
    res = run_cli("solve", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 3
    assert "numerical failure" in res.stderr
    assert not list(tmp_path.glob("solve_*.json"))


def test_picard_budget_exhaustion_exits_3(tmp_path):
    payload = solve_config()
    payload["solver"] = {"picard_tol": 1e-9, "max_iters": 1}
    cfg = write_config(tmp_path / "s.json", payload)
    res = run_cli("solve", "--config", cfg, "--out", str(tmp_path))
    assert res.returncode == 3
