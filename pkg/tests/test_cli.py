import json
import subprocess
import sys

import numpy as np
import pytest

from hstoda.cli import emit_plot_columns, main, parse_config, ConfigError, run
from hstoda.dynamics import Trajectory


SIMULATE = {
    "mode": "simulate", "seed": 7, "n_size": 5, "a": "random", "bracket": "plus_alpha",
    "hamiltonian": {"combination": [[1.0, "h_m:m=2"], [0.5, "Ik_alpha:k=2"]]},
    "integrator": {"t_span": [0, 1], "n_samples": 11},
    "watch": ["Ik_alpha:k=1", "h_m:m=2"],
    "plot": {"coordinates": [[0, 2]], "invariants": ["Ik_alpha:k=1"]},
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_simulate_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", _write(tmp_path, SIMULATE), "--out", str(out)]) == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,rho_0_1,")
    cons = json.loads((out / "conservation.json").read_text())
    assert cons["drift"]["Ik_alpha:k=1"] <= 1e-8
    plot = (out / "plot.csv").read_text().splitlines()
    assert plot[0] == "t,rho_0_2,Ik_alpha:k=1" and len(plot) == 12


def test_casimir_hamiltonian_has_no_drift(tmp_path):
    cfg = dict(SIMULATE, hamiltonian="Ik_alpha:k=2", plot={})
    out = tmp_path / "out"
    assert run(cfg, out) == 0
    cons = json.loads((out / "conservation.json").read_text())
    assert cons["state_drift"] <= 1e-8


def test_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(SIMULATE, a) == 0 and run(SIMULATE, b) == 0
    for name in ("trajectory.csv", "conservation.json", "plot.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    assert run(SIMULATE, c, seed=8) == 0
    assert (a / "trajectory.csv").read_bytes() != (c / "trajectory.csv").read_bytes()


@pytest.mark.parametrize("bad", [
    {"mode": "nope"},
    {"mode": "simulate", "n_size": 5},
    {"mode": "simulate", "n_size": 5, "hamiltonian": "Ik_alpha:k=0"},
    {"mode": "casimir", "n_size": 4, "a": [0.5, 2.0, 0.1, 0.3]},
    {"mode": "casimir", "n_size": 4, "watch": ["bogus"]},
    {"mode": "closed-form", "components": 7},
    {"mode": "verify", "extra": 1},
    {"mode": "simulate", "n_size": 4, "hamiltonian": "quartic", "bracket": {"kind": "pencil"},
     "a": [1, 1, 1, 1], "b": [1, 0.5, 0.5, 1]},
])
def test_config_errors_exit_2(tmp_path, bad):
    assert run(bad, tmp_path / "out") == 2


def test_parse_config_raises():
    with pytest.raises(ConfigError):
        parse_config({"mode": "verify", "seed": -1})


def test_unreadable_config_exit_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["--config", str(p)]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = {"mode": "closed-form", "components": 2,
           "initial": {"z": [[0.4, 0.0], [-0.7, 0.0]], "a": 0.5, "delta": [[0, 0.6], [0, 0]]}}
    out = tmp_path / "out"
    assert run(cfg, out) == 3
    diag = json.loads((out / "error.json").read_text())
    assert diag["error"] == "DegenerateModulus"


def test_closed_form_mode(tmp_path):
    out = tmp_path / "out"
    assert run({"mode": "closed-form", "seed": 11, "components": 2}, out) == 0
    rep = json.loads((out / "closed_form.json").read_text())
    assert rep["comparison"]["max_error"] <= 1e-6
    assert (out / "closed_trajectory.csv").exists() and (out / "numeric_trajectory.csv").exists()


def test_verify_mode_subset(tmp_path):
    out = tmp_path / "out"
    assert run({"mode": "verify", "seed": 42, "checks": ["1", "3"]}, out) == 0
    body = json.loads((out / "verify.json").read_text())
    assert body["passed"] and [r["name"] for r in body["results"]] == ["endomorphism", "basis_closure"]


def test_sweep_mode(tmp_path):
    cfg = {"mode": "sweep", "sweep": {"base": {"mode": "casimir", "n_size": 4, "a": "random",
                                               "watch": ["Ik_alpha:k=1"]},
                                      "grid": {"seed": [1, 2, 3]}, "workers": 2}}
    out = tmp_path / "out"
    assert run(cfg, out) == 0
    body = json.loads((out / "sweep.json").read_text())
    assert [r["exit"] for r in body["runs"]] == [0, 0, 0]
    assert (out / "run_002" / "casimir.json").exists()


def test_emit_plot_columns():
    t = np.linspace(0, 1, 4)
    states = np.repeat(np.arange(9.0).reshape(1, 3, 3), 4, axis=0)
    traj = Trajectory(t, states)
    assert emit_plot_columns(traj) == "t\n"
    text = emit_plot_columns(traj, [(0, 1), (1, 2)], {"trace": lambda s: float(np.trace(s))})
    lines = text.splitlines()
    assert lines[0] == "t,rho_0_1,rho_1_2,trace"
    assert all(len(line.split(",")) == 4 for line in lines)
    assert len({line.split(",")[3] for line in lines[1:]}) == 1


def test_console_entry_point(tmp_path):
    cfg = _write(tmp_path, {"mode": "casimir", "n_size": 4, "seed": 1, "watch": ["Ik_alpha:k=1"]})
    res = subprocess.run([sys.executable, "-m", "hstoda.cli", "--config", cfg, "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("Ik_alpha:k=1 ")
