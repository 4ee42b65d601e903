"""Property suite: each check returns a :class:`CheckResult` with the worst
residual seen and the tolerance it is held to."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .closed_form import quartic_w4, solve_n2, solve_n34
from .core import (
    alpha_apply,
    basis_commutator_table,
    basis_e,
    build_alpha,
    expand_in_basis,
    random_strictly_upper,
    upper_pairs,
)
from .dynamics import (
    BlockState,
    ComplexState,
    IntegratorConfig,
    ReducedState,
    block_flow,
    complex_flow,
    cubic_flow,
    flow,
    quartic_hamiltonian,
    reduced_flow,
    rotated_flow,
    rotated_invariants,
    to_reduced,
    to_rotated,
)
from .invariants import (
    C2_sixdim,
    C3_sixdim,
    Ik_alpha,
    block_assemble,
    block_c,
    block_d,
    block_pencil_sequences,
    coadjoint_action,
    h_m,
    hkn_closed,
    magri_field,
    random_group_element,
)
from .poisson import (
    BracketKind,
    ScalarField,
    a17_witness,
    bracket,
    ham_vector_field,
    jacobi_tensor,
    pencil_classify,
    pencil_linearity_residual,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tol: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: residual {self.residual:.3e} (tol {self.tol:.1e})"

    def to_json(self) -> dict:
        d = asdict(self)
        d["residual"] = float(d["residual"])
        return d


def _result(name, residual, tol, **detail):
    residual = float(residual)
    return CheckResult(name, bool(np.isfinite(residual) and residual <= tol), residual, tol, detail)


# ---------------------------------------------------------------------------
# algebra


def check_endomorphism(rng, n=6, trials=100, tol=1e-12):
    worst = 0.0
    for _ in range(trials):
        c = build_alpha(rng.uniform(-1, 1, n))
        x, y = random_strictly_upper(rng, n), random_strictly_upper(rng, n)
        lhs = alpha_apply(c, x @ y)
        rhs = alpha_apply(c, x) @ alpha_apply(c, y)
        worst = max(worst, np.linalg.norm(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return _result("endomorphism", worst, tol, n=n, trials=trials)


def check_basis_closure(rng, n=6, tol=1e-15):
    """Commutators of the ``e_ij`` against the case table.  Dyadic sequences
    are exact in floating point; general sequences agree up to rounding."""
    seqs = [np.arange(1, n + 1) / 8.0, rng.uniform(-1, 1, n), np.where(rng.random(n) < 0.4, 0.0, 0.5)]
    exact_worst, worst = 0.0, 0.0
    for s, a in enumerate(seqs):
        c = build_alpha(a)
        for (i, j), (p, q) in itertools.product(upper_pairs(n), repeat=2):
            x, y = basis_e(c, i, j), basis_e(c, p, q)
            d = np.abs(x @ y - y @ x - expand_in_basis(c, basis_commutator_table(c, i, j, p, q))).max()
            if s == 1:
                worst = max(worst, d)
            else:
                exact_worst = max(exact_worst, d)
    res = _result("basis_closure", max(worst, exact_worst), tol, dyadic_residual=exact_worst)
    res.passed = res.passed and exact_worst == 0.0
    return res


def random_pencil_pair(rng, n):
    """A pair that passes classification: zeros cut the index range into bands
    and each band receives at most one differing entry."""
    a = rng.uniform(-1, 1, n)
    zeros = sorted(rng.choice(n, size=rng.integers(0, max(1, n // 3) + 1), replace=False))
    a[zeros] = 0.0
    b = a.copy()
    cuts = [-1] + list(zeros) + [n]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        band = list(range(max(lo, 0), min(hi, n - 1) + 1))
        if band and rng.random() < 0.8:
            k = int(rng.choice(band))
            if a[k] != 0.0:
                b[k] = rng.uniform(-1, 1)
    return a, b


def check_jacobi(rng, n=5, tol=1e-12, pencils=5, k_diag=3):
    kinds = {
        "plus_alpha": (BracketKind.plus_alpha(rng.uniform(-1, 1, n)), (n, n)),
        "minus0": (BracketKind.minus0(), (n, n)),
        "eta": (BracketKind.eta_kind(rng.uniform(-1, 1, n)), (n, n)),
        "k_diagonal": (BracketKind.k_diagonal(k_diag), (k_diag, n)),
    }
    made = 0
    while made < pencils:
        a, b = random_pencil_pair(rng, n)
        if np.array_equal(a, b):
            continue
        kinds[f"pencil_{made}"] = (BracketKind.pencil(a, b, eps=float(rng.uniform(-2, 2))), (n, n))
        made += 1
    per = {}
    for name, (kind, shape) in kinds.items():
        per[name] = float(np.abs(jacobi_tensor(kind, shape)).max())
    return _result("jacobi", max(per.values()), tol, per_kind=per)


# ---------------------------------------------------------------------------
# invariants


def _sixdim_cases(rng):
    a = rng.uniform(0.2, 1.0, 6) * rng.choice([-1, 1], 6)
    a0 = a.copy()
    a0[0] = 0.0
    a1 = a.copy()
    a1[1] = 0.0
    return {"nonsingular": a, "a0_zero": a0, "a1_zero": a1}


def check_casimirs(rng, points=50, tol=1e-9):
    per = {}
    for case, a in _sixdim_cases(rng).items():
        c = build_alpha(a)
        kind = BracketKind.plus_alpha(c)
        fields = {"I1": Ik_alpha(c, 1), "I2": Ik_alpha(c, 2), "C2": C2_sixdim(c.seq), "C3": C3_sixdim(c.seq)}
        for name, f in fields.items():
            worst = 0.0
            for _ in range(points):
                p = random_strictly_upper(rng, 6)
                worst = max(worst, np.abs(ham_vector_field(kind, f, p)).max())
            per[f"{case}/{name}"] = float(worst)
    return _result("casimir", max(per.values()), tol, per_field=per)


def check_coadjoint_invariance(rng, n=5, trials=50, tol=1e-8):
    """``|I(Ad* rho) - I(rho)| / max(1, |I(rho)|)`` for ``I^1``, ``I^2``."""
    worst = 0.0
    for _ in range(trials):
        c = build_alpha(rng.uniform(-1, 1, n))
        g, _ = random_group_element(rng, c, 0.5)
        p = random_strictly_upper(rng, n)
        q = coadjoint_action("plus_alpha", g, p, c)
        for k in (1, 2):
            f = Ik_alpha(c, k)
            v = f(p)
            worst = max(worst, abs(f(q) - v) / max(1.0, abs(v)))
    return _result("coadjoint_invariance", worst, tol, n=n, trials=trials)


def _random_field(rng, n):
    lin, quadc = rng.normal(size=(n, n)), rng.normal(size=(n, n))

    def value(p):
        return float(np.sum(lin * p) + np.sum(quadc * p) ** 2)

    def grad(p):
        return lin + 2 * np.sum(quadc * p) * quadc

    return ScalarField(value, grad)


def check_pencil_classification(rng, n=8, pairs=200, tol=1e-12):
    disagreements = 0
    worst = 0.0
    n_pass = 0
    for s in range(pairs):
        if s % 2 == 0:
            a, b = random_pencil_pair(rng, n)
            if rng.random() < 0.5:
                # perturb one more entry: may or may not break the pencil
                k = int(rng.integers(n))
                b[k] = rng.uniform(-1, 1) if rng.random() < 0.8 else 0.0
        else:
            a = np.where(rng.random(n) < 0.25, 0.0, rng.uniform(-1, 1, n))
            b = np.where(rng.random(n) < 0.25, 0.0, rng.uniform(-1, 1, n))
            same = rng.random(n) < 0.5
            b[same] = a[same]
        verdict = pencil_classify(a, b).passed
        brute = a17_witness(a, b) is None
        if verdict != brute:
            disagreements += 1
        if verdict:
            n_pass += 1
            p = float(rng.uniform(0, 1))
            pt = random_strictly_upper(rng, n)
            f, g = _random_field(rng, n), _random_field(rng, n)
            scale = max(1.0, abs(bracket(BracketKind.plus_alpha(a), f, g, pt)))
            worst = max(worst, pencil_linearity_residual(a, b, p, f, g, pt) / scale)
    res = _result("pencil_classification", worst, tol, disagreements=disagreements, passing_pairs=n_pass,
                  pairs=pairs)
    res.passed = res.passed and disagreements == 0
    return res


HKN = [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2), (2, 3), (2, 4)]


def check_magri(rng, n_size=6, points=5, tol=1e-9):
    b1 = float(rng.uniform(-0.9, 0.9))
    a, b = block_pencil_sequences(n_size, b1)
    ca, cb = build_alpha(a), build_alpha(b)
    coef_worst = 0.0
    magri = {kn: magri_field(kn[0], kn[1], ca, cb) for kn in HKN}
    closed = {kn: hkn_closed(kn[0], kn[1], b1) for kn in HKN}
    pts = [random_strictly_upper(rng, n_size) for _ in range(points)]
    for p in pts:
        for kn in HKN:
            coef_worst = max(coef_worst, abs(magri[kn](p) - closed[kn](p)))
    inv_worst = 0.0
    for kind in (BracketKind.plus_alpha(ca), BracketKind.plus_alpha(cb)):
        for p in pts[:2]:
            for k1, k2 in itertools.combinations(HKN, 2):
                inv_worst = max(inv_worst, abs(bracket(kind, closed[k1], closed[k2], p)))
    return _result("magri", max(coef_worst, inv_worst), tol, coefficient_residual=coef_worst,
                   involution_residual=inv_worst, b1=b1)


def check_banded_constants(rng, n_size=6, t_end=10.0, tol=1e-8, scale=0.3):
    """Flows of each ``h^k_n`` under the ``a == 1`` bracket keep ``a`` and ``delta``."""
    b1 = float(rng.uniform(-0.9, 0.9))
    a, _ = block_pencil_sequences(n_size, b1)
    kind = BracketKind.plus_alpha(a)
    cfg = IntegratorConfig(t_span=(0.0, t_end), n_samples=21)
    per = {}
    p0 = random_strictly_upper(rng, n_size, scale)
    for k, n in HKN:
        tr = flow(kind, hkn_closed(k, n, b1), p0, cfg)
        drift_a = np.abs(tr.states[:, 0, 1] - p0[0, 1]).max()
        drift_d = np.abs(tr.states[:, 2:, 2:] - p0[2:, 2:]).max()
        per[f"h{k}_{n}"] = float(max(drift_a, drift_d))
    return _result("banded_constants", max(per.values()), tol, per_flow=per)


# ---------------------------------------------------------------------------
# cubic flow


def random_complex_state(rng, n, scale=0.5) -> ComplexState:
    z = (rng.normal(size=n) + 1j * rng.normal(size=n)) * scale
    d = np.triu(rng.normal(size=(n, n)), 1)
    return ComplexState(z, float(rng.uniform(-1, 1)), d)


def cubic_invariants(state: ComplexState, red0: ReducedState) -> dict:
    """Named constants of the cubic flow as callables of ``z``."""
    a, dl = state.a, state.delta
    d = dl - dl.T

    def mat(z):
        return block_assemble(a, z.real, z.imag, dl)

    out = {f"h{m}": (lambda z, f=h_m(m): f(mat(z))) for m in range(1, 6)}
    out["c2"] = lambda z: float(np.real(np.vdot(z, z)))
    out["rho2"] = lambda z: float(abs(z @ z) ** 2)
    out["combo"] = lambda z: complex(np.vdot(z, d @ d @ z) + 1j * a * np.vdot(z, d @ z))
    for k, lam in enumerate(red0.lambdas):
        def pair(z, k=k):
            return (red0.O @ z)[2 * k: 2 * k + 2]

        out[f"c_{k + 1}"] = lambda z, lam=lam, pair=pair: block_c(pair(z), lam, a)
        out[f"d_{k + 1}"] = lambda z, lam=lam, pair=pair: block_d(pair(z), lam, a)
    return out


def check_cubic_conservation(rng, sizes=(4, 5), t_end=10.0, tol=1e-6, tol_tight=1e-8):
    cfg = IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14, t_span=(0.0, t_end), n_samples=51)
    per = {}
    tight = {}
    for n in sizes:
        st = random_complex_state(rng, n, 0.5)
        red0 = to_reduced(st.z, st.delta)
        tr = cubic_flow(st.z, st.a, st.delta, cfg)
        inv = cubic_invariants(st, red0)
        for name, fn in inv.items():
            vals = np.array([fn(z) for z in tr.states])
            per[f"n{n}/{name}"] = float(np.abs(vals - vals[0]).max())
        # the combination equals a^2 h2 - h5/4
        z0 = st.z
        tight[f"n{n}/combo_identity"] = float(abs(inv["combo"](z0) - (st.a ** 2 * inv["h2"](z0) - inv["h5"](z0) / 4)))
        for k in range(len(red0.lambdas)):
            vals = [inv[f"d_{k + 1}"](z) + 0.5 * inv[f"c_{k + 1}"](z) ** 2 for z in tr.states]
            tight[f"n{n}/d+c^2/2_{k + 1}"] = float(np.abs(vals).max())
        # rotated chart integration
        c2 = inv["c2"](z0)
        rot, par = to_rotated(red0, st.a, c2)
        rtr = rotated_flow(rot, par, cfg)
        vals = [rotated_invariants(rot.with_packed(s), par) for s in rtr.states]
        tight[f"n{n}/sum_p"] = float(max(abs(v["sum_p"]) for v in vals))
        tight[f"n{n}/sum_q"] = float(max(abs(v["sum_q"] - par.rho_mod) for v in vals))
        for key in ("g", "f"):
            if key in vals[0]:
                tight[f"n{n}/{key}"] = float(max(abs(v[key] - vals[0][key]) for v in vals))
    res = _result("cubic_conservation", max(per.values()), tol, drifts=per, tight=tight)
    tight_worst = max(tight.values())
    res.detail["tight_worst"] = tight_worst
    res.passed = res.passed and tight_worst <= tol_tight
    return res


def check_chart_consistency(rng, n=4, t_end=1.0, tol=1e-6):
    st = random_complex_state(rng, n, 0.5)
    h = quartic_hamiltonian()
    cfg = IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14, t_span=(0.0, t_end), n_samples=2)
    rho0 = st.to_block().to_matrix()
    kind = BracketKind.plus_alpha(np.ones(n + 2))
    z_full = flow(kind, h, rho0, cfg).final()
    z_full = z_full[0, 2:] + 1j * z_full[1, 2:]
    z_block = block_flow(st.to_block(), h, cfg).final()
    z_block = z_block[0, 2:] + 1j * z_block[1, 2:]
    z_complex = complex_flow(st, h, cfg).final()
    z_cubic = cubic_flow(st.z, st.a, st.delta, cfg).final()
    red0 = to_reduced(st.z, st.delta)
    c2 = float(np.real(np.vdot(st.z, st.z)))
    red_t = red0.with_packed(reduced_flow(red0, st.a, c2, cfg).final())
    z_reduced = red_t.to_z()
    rot0, par = to_rotated(red0, st.a, c2)
    rot_t = rot0.with_packed(rotated_flow(rot0, par, cfg).final())
    # rotated coordinates of the reference solution at t_end
    red_ref = to_reduced(z_cubic, st.delta)
    red_ref = ReducedState(*(_split(red0.O @ z_cubic, red0)), red0.lambdas, red0.O)
    rot_ref, _ = to_rotated(red_ref, st.a, c2)
    errs = {
        "block": float(np.abs(z_block - z_full).max()),
        "complex": float(np.abs(z_complex - z_full).max()),
        "cubic": float(np.abs(z_cubic - z_full).max()),
        "reduced": float(np.abs(z_reduced - z_full).max()),
        "rotated": float(max(np.abs(rot_t.etas() - rot_ref.etas()).max(), np.abs(rot_t.r - rot_ref.r).max())),
    }
    return _result("chart_consistency", max(errs.values()), tol, errors=errs, n=n)


def _split(w, red0):
    m = len(red0.lambdas)
    xi = w[: 2 * m].reshape(m, 2)
    return xi, (w[2 * m] if red0.odd else None)


def check_n2_closed_form(rng, trials=20, t_end=5.0, tol=1e-6):
    cfg = IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14, t_span=(0.0, t_end), n_samples=101)
    worst = 0.0
    done = 0
    while done < trials:
        st = random_complex_state(rng, 2, 0.6)
        sol = solve_n2(st)
        tr = cubic_flow(st.z, st.a, st.delta, cfg)
        worst = max(worst, np.abs(sol(tr.t) - tr.states).max())
        done += 1
    return _result("n2_closed_form", worst, tol, trials=trials)


def check_n34_quadrature(rng, t_end=3.0, tol=1e-5, tol_quartic=1e-8, max_tries=50):
    """Three and four components, each run required to pass a turning point
    of ``r_1`` inside the window."""
    cfg = IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14, t_span=(0.0, t_end), n_samples=61)
    errs, quart, turns = {}, {}, {}
    for n in (3, 4):
        for _ in range(max_tries):
            st = random_complex_state(rng, n, 0.5)
            try:
                sol = solve_n34(st)
            except (ValueError, ArithmeticError):
                continue
            if sol.stationary or sol.period > 2 * t_end:
                continue
            tr = cubic_flow(st.z, st.a, st.delta, cfg)
            # along the oracle trajectory: e + w4(r1) - p1^2
            red0 = to_reduced(st.z, st.delta)
            c2 = float(np.real(np.vdot(st.z, st.z)))
            i1 = 1 if red0.odd else 0
            p1s, qres = [], 0.0
            for z in tr.states:
                red = ReducedState(*_split(red0.O @ z, red0), red0.lambdas, red0.O)
                rot, _ = to_rotated(red, st.a, c2)
                p1, r1 = rot.p[i1], rot.r[i1]
                p1s.append(p1)
                qres = max(qres, abs(sol.data.e + quartic_w4(r1, sol.data) - p1 * p1))
            n_turn = int(np.sum(np.diff(np.sign(p1s)) != 0))
            if n_turn == 0:
                continue
            errs[n] = float(np.abs(sol(tr.t) - tr.states).max())
            quart[n] = float(qres)
            turns[n] = n_turn
            break
        else:
            errs[n] = float("inf")
    res = _result("n34_quadrature", max(errs.values()), tol, errors=errs, quartic_residual=quart,
                  turning_points=turns)
    res.passed = res.passed and max(quart.values(), default=np.inf) <= tol_quartic and len(quart) == 2
    return res


SUITE = [
    ("1", check_endomorphism),
    ("2", check_jacobi),
    ("3", check_basis_closure),
    ("4", check_casimirs),
    ("5", check_coadjoint_invariance),
    ("6", check_pencil_classification),
    ("7", check_magri),
    ("8", check_banded_constants),
    ("9", check_cubic_conservation),
    ("10", check_chart_consistency),
    ("11", check_n2_closed_form),
    ("12", check_n34_quadrature),
]


def run_suite(seed: int = 0, only=None) -> list:
    results = []
    for key, fn in SUITE:
        names = {key, fn.__name__, fn.__name__.removeprefix("check_")}
        if only and not names & set(only):
            continue
        rng = np.random.default_rng([seed, int(key)])
        results.append(fn(rng))
    return results
