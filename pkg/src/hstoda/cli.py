"""Command line entry point: ``hstoda --config run.json [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure (a
``error.json`` with the diagnostic is written to the output directory).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .closed_form import DegenerateModulus, PreconditionError, compare, n2_invariant_checks, solve_n2, solve_n34
from .core import DeformationSequence, build_alpha, random_strictly_upper
from .dynamics import (
    ComplexState,
    IntegrationError,
    IntegratorConfig,
    SingularConfiguration,
    Trajectory,
    conservation_report,
    cubic_flow,
    flow,
    quartic_hamiltonian,
)
from .invariants import InvariantId, invariant_field
from .poisson import BracketKind, ScalarField, coordinate_indices
from .verify import run_suite

log = logging.getLogger("hstoda")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MODES = ("verify", "simulate", "casimir", "closed-form", "sweep")
BRACKETS = ("canonical", "plus_alpha", "minus0", "s_alpha", "eta", "k_diagonal", "pencil")
METHODS = ("RK45", "DOP853", "RK4")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    mode: str
    seed: int = 0
    n_size: Optional[int] = None
    a: object = None
    b: object = None
    bracket: dict = field(default_factory=lambda: {"kind": "plus_alpha"})
    hamiltonian: object = None
    initial: dict = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    watch: list = field(default_factory=list)
    plot: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    checks: Optional[list] = None
    tolerance: float = 1e-6
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _matrix(val, n, name):
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a numeric matrix") from None
    _need(arr.shape == (n, n), f"{name} must have shape ({n}, {n})")
    return arr


def _parse_integrator(d) -> IntegratorConfig:
    _need(isinstance(d, dict), "integrator must be an object")
    known = {"method", "rtol", "atol", "t_span", "n_samples", "fixed_step", "max_step"}
    extra = set(d) - known
    _need(not extra, f"unknown integrator fields {sorted(extra)}")
    cfg = IntegratorConfig()
    if "method" in d:
        _need(d["method"] in METHODS, f"integrator.method must be one of {METHODS}")
        cfg.method = d["method"]
    for key in ("rtol", "atol", "fixed_step", "max_step"):
        if key in d:
            _need(isinstance(d[key], (int, float)) and d[key] > 0, f"integrator.{key} must be positive")
            setattr(cfg, key, float(d[key]))
    if "t_span" in d:
        ts = d["t_span"]
        _need(isinstance(ts, list) and len(ts) == 2 and all(isinstance(v, (int, float)) for v in ts)
              and ts[1] > ts[0], "integrator.t_span must be [t0, t1] with t1 > t0")
        cfg.t_span = (float(ts[0]), float(ts[1]))
    if "n_samples" in d:
        _need(isinstance(d["n_samples"], int) and d["n_samples"] >= 2, "integrator.n_samples must be >= 2")
        cfg.n_samples = d["n_samples"]
    return cfg


def _check_sequence(val, n, name):
    if val is None or val in ("ones", "random"):
        return val
    _need(isinstance(val, list), f"{name} must be a list, 'ones' or 'random'")
    _need(n is None or len(val) == n, f"{name} must have n_size entries")
    try:
        DeformationSequence(val)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return val


def parse_config(raw: dict) -> RunConfig:
    _need(isinstance(raw, dict), "config must be a JSON object")
    known = {"mode", "seed", "n_size", "a", "b", "bracket", "hamiltonian", "initial", "integrator", "watch",
             "plot", "output", "checks", "tolerance", "sweep", "components"}
    extra = set(raw) - known
    _need(not extra, f"unknown config fields {sorted(extra)}")
    mode = raw.get("mode")
    _need(mode in MODES, f"mode must be one of {MODES}")
    cfg = RunConfig(mode=mode, raw=copy.deepcopy(raw))
    seed = raw.get("seed", 0)
    _need(isinstance(seed, int) and seed >= 0, "seed must be a non-negative integer")
    cfg.seed = seed
    n = raw.get("n_size")
    if "components" in raw:
        comp = raw["components"]
        _need(isinstance(comp, int) and comp >= 1, "components must be a positive integer")
        _need(n is None or n == comp + 2, "n_size must equal components + 2")
        n = comp + 2
    if n is not None:
        _need(isinstance(n, int) and n >= 2, "n_size must be an integer >= 2")
    cfg.n_size = n
    cfg.a = _check_sequence(raw.get("a"), n, "a")
    cfg.b = _check_sequence(raw.get("b"), n, "b")
    if "bracket" in raw:
        br = raw["bracket"]
        if isinstance(br, str):
            br = {"kind": br}
        _need(isinstance(br, dict) and br.get("kind") in BRACKETS, f"bracket.kind must be one of {BRACKETS}")
        cfg.bracket = br
    if "integrator" in raw:
        cfg.integrator = _parse_integrator(raw["integrator"])
    watch = raw.get("watch", [])
    _need(isinstance(watch, list), "watch must be a list of invariant ids")
    for w in watch:
        try:
            InvariantId.parse(w)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"watch: {exc}") from None
    cfg.watch = watch
    ham = raw.get("hamiltonian")
    if ham is not None:
        _validate_hamiltonian(ham)
    cfg.hamiltonian = ham
    init = raw.get("initial", {})
    _need(isinstance(init, dict), "initial must be an object")
    cfg.initial = init
    plot = raw.get("plot", {})
    _need(isinstance(plot, dict), "plot must be an object")
    cfg.plot = plot
    out = raw.get("output", {})
    _need(isinstance(out, dict), "output must be an object")
    cfg.output = out
    if "checks" in raw:
        _need(isinstance(raw["checks"], list), "checks must be a list")
        cfg.checks = [str(c) for c in raw["checks"]]
    if "tolerance" in raw:
        _need(isinstance(raw["tolerance"], (int, float)) and raw["tolerance"] > 0, "tolerance must be positive")
        cfg.tolerance = float(raw["tolerance"])

    if mode in ("simulate", "casimir"):
        _need(n is not None, f"mode {mode} needs n_size")
    if mode == "simulate":
        _need(ham is not None, "mode simulate needs a hamiltonian")
    if mode == "closed-form":
        _need(n in (4, 5, 6), "closed-form needs 2, 3 or 4 complex components (n_size 4, 5 or 6)")
    if mode == "sweep":
        sw = raw.get("sweep")
        _need(isinstance(sw, dict) and isinstance(sw.get("base"), dict) and isinstance(sw.get("grid"), dict),
              "sweep needs {'base': {...}, 'grid': {...}}")
        _need(sw["base"].get("mode") in MODES and sw["base"].get("mode") != "sweep",
              "sweep.base.mode must be a non-sweep mode")
        for key, vals in sw["grid"].items():
            _need(isinstance(vals, list) and vals, f"sweep.grid.{key} must be a non-empty list")
        workers = sw.get("workers", 1)
        _need(isinstance(workers, int) and workers >= 1, "sweep.workers must be a positive integer")
        for combo in _grid(sw):
            parse_config(combo)
        cfg.sweep = sw
    return cfg


def _validate_hamiltonian(ham):
    if isinstance(ham, str):
        if ham == "quartic":
            return
        try:
            InvariantId.parse(ham)
        except ValueError as exc:
            raise ConfigError(f"hamiltonian: {exc}") from None
        return
    if isinstance(ham, dict) and isinstance(ham.get("combination"), list):
        for term in ham["combination"]:
            _need(isinstance(term, list) and len(term) == 2 and isinstance(term[0], (int, float)),
                  "combination terms are [coefficient, invariant id]")
            _validate_hamiltonian(term[1])
        return
    raise ConfigError("hamiltonian must be an invariant id, 'quartic' or {'combination': [...]}")


def _grid(sw):
    keys = sorted(sw["grid"])
    for vals in itertools.product(*(sw["grid"][k] for k in keys)):
        combo = copy.deepcopy(sw["base"])
        combo.update(dict(zip(keys, vals)))
        yield combo


# ---------------------------------------------------------------------------
# building blocks


def _sequence(spec, n, rng):
    if spec is None or spec == "ones":
        return np.ones(n)
    if spec == "random":
        return rng.uniform(-1, 1, n)
    return np.asarray(spec, dtype=float)


def _bracket(cfg: RunConfig, a, b) -> BracketKind:
    br = cfg.bracket
    kind = br["kind"]
    if kind == "canonical":
        return BracketKind.canonical()
    if kind == "plus_alpha":
        return BracketKind.plus_alpha(a)
    if kind == "s_alpha":
        return BracketKind.s_alpha(a)
    if kind == "minus0":
        return BracketKind.minus0()
    if kind == "eta":
        return BracketKind.eta_kind(build_alpha(a).eta)
    if kind == "k_diagonal":
        return BracketKind.k_diagonal(int(br.get("k", 1)))
    try:
        return BracketKind.pencil(a, b, eps=float(br.get("eps", 1.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _hamiltonian(spec, a, b) -> ScalarField:
    if spec == "quartic":
        return quartic_hamiltonian()
    if isinstance(spec, str):
        return invariant_field(spec, a, b)
    total = None
    for coef, inv in spec["combination"]:
        f = _hamiltonian(inv, a, b).scaled(float(coef))
        total = f if total is None else total + f
    return total


def _initial_point(cfg: RunConfig, kind: BracketKind, rng):
    n = cfg.n_size
    init = cfg.initial
    shape = (kind.k, n) if kind.tag == "k_diagonal" else (n, n)
    if "rho" in init:
        arr = np.asarray(init["rho"], dtype=float)
        _need(arr.shape == shape, f"initial.rho must have shape {shape}")
        return arr
    scale = float(init.get("scale", 0.5))
    if kind.tag == "k_diagonal":
        return rng.normal(scale=scale, size=shape)
    if kind.tag in ("minus0", "s_alpha"):
        return np.tril(rng.normal(scale=scale, size=shape))
    if kind.tag == "canonical":
        return rng.normal(scale=scale, size=shape)
    return random_strictly_upper(rng, n, scale)


def _complex_initial(cfg: RunConfig, rng) -> ComplexState:
    m = cfg.n_size - 2
    init = cfg.initial
    if "z" in init:
        z = np.asarray(init["z"], dtype=float)
        _need(z.shape == (m, 2), f"initial.z must be a list of {m} [re, im] pairs")
        delta = _matrix(init.get("delta", np.zeros((m, m)).tolist()), m, "initial.delta")
        _need(isinstance(init.get("a"), (int, float)), "initial.a must be a number")
        return ComplexState(z[:, 0] + 1j * z[:, 1], float(init["a"]), np.triu(delta, 1))
    scale = float(init.get("scale", 0.5))
    z = (rng.normal(size=m) + 1j * rng.normal(size=m)) * scale
    d = np.triu(rng.normal(size=(m, m)), 1)
    return ComplexState(z, float(rng.uniform(-1, 1)), d)


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def trajectory_columns(traj: Trajectory, kind: Optional[BracketKind] = None):
    """Header and rows ``t, coordinates`` for a trajectory."""
    states = traj.states
    if kind is not None and states.ndim == 3:
        idx = coordinate_indices(kind, states.shape[1:])
        names = [f"rho_{i}_{j}" for i, j in idx]
        cols = np.stack([states[:, i, j] for i, j in idx], axis=1) if idx else np.zeros((len(traj.t), 0))
    else:
        flat = states.reshape(len(traj.t), -1)
        if np.iscomplexobj(flat):
            names = [f"re_{k}" for k in range(flat.shape[1])] + [f"im_{k}" for k in range(flat.shape[1])]
            cols = np.concatenate([flat.real, flat.imag], axis=1)
        else:
            names = [f"x_{k}" for k in range(flat.shape[1])]
            cols = flat
    return ["t"] + names, np.column_stack([traj.t, cols])


def emit_plot_columns(traj: Trajectory, coordinates=(), invariants=None) -> str:
    """Gnuplot-ready CSV text: ``t``, the selected coordinates, then the
    selected invariants (a mapping name -> callable on a state).  An empty
    selection gives the header line only."""
    invariants = invariants or {}
    header = ["t"] + ["rho_" + "_".join(str(i) for i in c) for c in coordinates] + list(invariants)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    if len(header) == 1:
        # nothing selected: the header alone
        return buf.getvalue()
    for t, s in zip(traj.t, traj.states):
        row = [t] + [s[tuple(c)] for c in coordinates] + [fn(s) for fn in invariants.values()]
        w.writerow([_fmt(np.real(v)) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# modes


def run_verify(cfg: RunConfig, out: Path) -> int:
    results = run_suite(cfg.seed, only=cfg.checks)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    _write_json(out / "verify.json", {"seed": cfg.seed, "passed": ok, "results": [r.to_json() for r in results]})
    return EXIT_OK if ok else EXIT_NUMERIC


def run_simulate(cfg: RunConfig, out: Path, rng) -> int:
    n = cfg.n_size
    a = _sequence(cfg.a, n, rng)
    b = _sequence(cfg.b, n, rng) if cfg.b is not None else None
    kind = _bracket(cfg, a, b)
    h = _hamiltonian(cfg.hamiltonian, a, b)
    p0 = _initial_point(cfg, kind, rng)
    traj = flow(kind, h, p0, cfg.integrator)
    header, rows = trajectory_columns(traj, kind)
    _write_csv(out / "trajectory.csv", header, rows)
    watch = {w: invariant_field(w, a, b) for w in cfg.watch}
    watch["hamiltonian"] = h
    report = conservation_report(traj, watch)
    drift = float(np.abs(traj.states - traj.states[0]).max())
    _write_json(out / "conservation.json", {"seed": cfg.seed, "a": [float(v) for v in a],
                                            "drift": report.to_json(), "state_drift": drift})
    if cfg.plot:
        coords = [tuple(c) for c in cfg.plot.get("coordinates", [])]
        sel = {w: invariant_field(w, a, b) for w in cfg.plot.get("invariants", [])}
        (out / "plot.csv").write_text(emit_plot_columns(traj, coords, sel))
    print(json.dumps(report.to_json(), sort_keys=True))
    return EXIT_OK


def run_casimir(cfg: RunConfig, out: Path, rng) -> int:
    n = cfg.n_size
    a = _sequence(cfg.a, n, rng)
    b = _sequence(cfg.b, n, rng) if cfg.b is not None else None
    kind = _bracket(cfg, a, b)
    p0 = _initial_point(cfg, kind, rng)
    values = {}
    for w in cfg.watch:
        v = invariant_field(w, a, b)(p0)
        values[w] = float(v)
        print(f"{w} {_fmt(v)}")
    _write_json(out / "casimir.json", {"seed": cfg.seed, "values": values})
    return EXIT_OK


def run_closed_form(cfg: RunConfig, out: Path, rng) -> int:
    st = _complex_initial(cfg, rng)
    m = st.z.size
    icfg = cfg.integrator
    if "integrator" not in cfg.raw:
        icfg = IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14,
                                t_span=(0.0, 5.0 if m == 2 else 3.0), n_samples=101)
    sol = solve_n2(st) if m == 2 else solve_n34(st)
    num = cubic_flow(st.z, st.a, st.delta, icfg)
    closed = sol(num.t)
    rep = compare(closed, num.states)
    body = {"seed": cfg.seed, "components": m, "comparison": rep.to_json(), "tolerance": cfg.tolerance,
            "a": st.a}
    if m == 2:
        body["method"] = sol.method
        body["invariants"] = n2_invariant_checks(sol, num.t).to_json()
        body["omega1"] = sol.omega1
    else:
        body["period"] = sol.period if not sol.stationary else None
    _write_json(out / "closed_form.json", body)
    header, rows = trajectory_columns(Trajectory(num.t, closed))
    _write_csv(out / "closed_trajectory.csv", header, rows)
    header, rows = trajectory_columns(num)
    _write_csv(out / "numeric_trajectory.csv", header, rows)
    print(f"max error {rep.max_error:.3e}")
    return EXIT_OK if rep.max_error <= cfg.tolerance else EXIT_NUMERIC


def _run_one(args):
    raw, out = args
    return run(raw, Path(out))


def run_sweep(cfg: RunConfig, out: Path) -> int:
    combos = list(_grid(cfg.sweep))
    jobs = [(c, str(out / f"run_{i:03d}")) for i, c in enumerate(combos)]
    workers = cfg.sweep.get("workers", 1)
    if workers == 1:
        codes = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_one, jobs))
    _write_json(out / "sweep.json", {"runs": [{"dir": Path(d).name, "config": c, "exit": code}
                                              for (c, d), code in zip(jobs, codes)]})
    return max(codes) if codes else EXIT_OK


def run(raw: dict, out: Path, seed: Optional[int] = None) -> int:
    """Validate and execute one configuration; returns the exit status."""
    try:
        if seed is not None:
            raw = dict(raw, seed=seed)
        cfg = parse_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    try:
        if cfg.mode == "verify":
            return run_verify(cfg, out)
        if cfg.mode == "simulate":
            return run_simulate(cfg, out, rng)
        if cfg.mode == "casimir":
            return run_casimir(cfg, out, rng)
        if cfg.mode == "closed-form":
            return run_closed_form(cfg, out, rng)
        return run_sweep(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, SingularConfiguration, DegenerateModulus, PreconditionError,
            np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), "seed": cfg.seed}
        for attr in ("t_fail", "t"):
            if getattr(exc, attr, None) is not None:
                diag[attr] = float(getattr(exc, attr))
        _write_json(out / "error.json", diag)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hstoda", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    ap.add_argument("--out", default=None, help="output directory (default: output.dir or ./out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("config error: seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    default_out = "out"
    if isinstance(raw, dict) and isinstance(raw.get("output"), dict):
        default_out = raw["output"].get("dir", "out")
    out = Path(args.out or default_out)
    return run(raw, out, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
