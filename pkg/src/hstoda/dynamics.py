"""Hamilton flows and the block / complex / reduced / rotated charts.

Chart summary for a strictly upper ``rho`` of size ``n + 2``::

    rho = [[0, a, x^T],
           [0, 0, y^T],
           [0, 0, delta]]          z = x + i y,   D = delta - delta^T

The reduced chart rotates ``z`` by a real orthogonal ``O`` bringing ``D`` to
blocks ``lambda_k eps`` and splits ``O z`` into pairs ``xi_k`` (plus a lone
``xi_0`` for odd ``n``).  The rotated chart uses ``eta_k = xi_k^T xi_k``
written as ``e^{i phi} (q_k + i p_k)`` together with auxiliary ``r_k``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .invariants import EPS2, block_assemble, block_parts
from .poisson import BracketKind, ScalarField, coordinate_mask, vector_field_from_grad

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Step-size underflow or another failure of the integrator."""

    def __init__(self, message, t_fail=None):
        super().__init__(message)
        self.t_fail = t_fail


class SingularConfiguration(ArithmeticError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


@dataclass
class IntegratorConfig:
    """``method`` is ``"RK45"`` (Dormand-Prince 5(4)), ``"DOP853"`` or the
    fixed-step ``"RK4"`` (which uses ``fixed_step``)."""

    method: str = "RK45"
    rtol: float = 1e-9
    atol: float = 1e-12
    t_span: tuple = (0.0, 1.0)
    n_samples: int = 101
    fixed_step: float = 1e-3
    max_step: float = np.inf

    def times(self) -> np.ndarray:
        return np.linspace(self.t_span[0], self.t_span[1], self.n_samples)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    chart: str = ""
    names: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def final(self):
        return self.states[-1]

    def flat(self) -> np.ndarray:
        """States as ``(T, d)`` real columns (complex split into re/im)."""
        s = self.states.reshape(len(self.t), -1)
        if np.iscomplexobj(s):
            s = np.concatenate([s.real, s.imag], axis=1)
        return s


def _rk4(fun, t_eval, y0, h):
    ys = [y0.copy()]
    y = y0.copy()
    t = t_eval[0]
    for t_next in t_eval[1:]:
        while t < t_next - 1e-15:
            dt = min(h, t_next - t)
            k1 = fun(t, y)
            k2 = fun(t + dt / 2, y + dt / 2 * k1)
            k3 = fun(t + dt / 2, y + dt / 2 * k2)
            k4 = fun(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        ys.append(y.copy())
    return np.array(ys)


def integrate(rhs: Callable, y0, cfg: IntegratorConfig, chart: str = "", names=()) -> Trajectory:
    """Integrate ``dy/dt = rhs(y)`` for an array state of any shape."""
    y0 = np.asarray(y0)
    shape = y0.shape
    t_eval = cfg.times()

    def fun(t, y):
        return np.asarray(rhs(y.reshape(shape))).ravel()

    if cfg.method == "RK4":
        ys = _rk4(fun, t_eval, y0.ravel(), cfg.fixed_step)
        return Trajectory(t_eval, ys.reshape((len(t_eval),) + shape), chart, list(names))
    sol = solve_ivp(fun, cfg.t_span, y0.ravel(), method=cfg.method, t_eval=t_eval,
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
    if sol.status != 0:
        # rerun without sampling so that the last accepted step is visible
        steps = solve_ivp(fun, cfg.t_span, y0.ravel(), method=cfg.method,
                          rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
        t_fail = float(steps.t[-1])
        raise IntegrationError(f"integration failed at t={t_fail}: {sol.message}", t_fail)
    ys = sol.y.T.reshape((len(sol.t),) + shape)
    return Trajectory(sol.t, ys, chart, list(names))


def flow(kind: BracketKind, h: ScalarField, point, cfg: IntegratorConfig) -> Trajectory:
    """Integrate the Hamiltonian vector field of ``h`` for the bracket ``kind``."""
    point = np.asarray(point, dtype=float)
    mask = coordinate_mask(kind, point.shape)

    def rhs(p):
        return vector_field_from_grad(kind, h.gradient(p, mask), p)

    return integrate(rhs, point, cfg, chart=kind.tag)


# ---------------------------------------------------------------------------
# block chart


@dataclass
class BlockState:
    a: float
    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_matrix(cls, rho) -> "BlockState":
        a, x, y, d = block_parts(rho)
        return cls(float(a), x.copy(), y.copy(), d.copy())

    def to_matrix(self) -> np.ndarray:
        return block_assemble(self.a, self.x, self.y, self.delta)

    def to_complex(self) -> "ComplexState":
        return ComplexState(self.x + 1j * self.y, self.a, self.delta.copy())

    def pack(self) -> np.ndarray:
        return self.to_matrix()


def _plus_alpha_ones(m):
    # pi_{+,alpha} with alpha == 1 on the delta block
    return np.triu(m, 1) - np.triu(np.tril(m, -1).T, 1)


def block_partials(state: BlockState, h: ScalarField):
    g = h.gradient(state.to_matrix())
    return block_parts(g)


def block_rhs(state: BlockState, h: ScalarField) -> BlockState:
    """Right-hand side in ``(a, x, y, delta)`` for the bracket with ``alpha == 1``.

    ``h`` is a field on the strictly upper matrix; its block partials are read
    off the matrix gradient.
    """
    ha, hx, hy, hd = block_partials(state, h)
    d = state.delta - state.delta.T
    hs = hd - hd.T
    x, y, a = state.x, state.y, state.a
    da = y @ hx - x @ hy
    dx = -ha * y + d @ hx + a * hy - hs @ x
    dy = ha * x + d @ hy - a * hx - hs @ y
    dd = _plus_alpha_ones(np.outer(hx, x) + np.outer(hy, y) + state.delta @ hs - hs @ state.delta)
    return BlockState(float(da), dx, dy, dd)


def block_flow(state: BlockState, h: ScalarField, cfg: IntegratorConfig) -> Trajectory:
    def rhs(m):
        return block_rhs(BlockState.from_matrix(m), h).to_matrix()

    return integrate(rhs, state.to_matrix(), cfg, chart="block")


# ---------------------------------------------------------------------------
# complex chart


@dataclass
class ComplexState:
    z: np.ndarray
    a: float
    delta: np.ndarray

    def to_block(self) -> BlockState:
        return BlockState(self.a, self.z.real.copy(), self.z.imag.copy(), self.delta.copy())

    @property
    def skew(self) -> np.ndarray:
        return self.delta - self.delta.T


def complex_rhs(state: ComplexState, h: ScalarField) -> np.ndarray:
    """General ``dz/dt = ((h_delta)^T - h_delta + i h_a) z + 2 (D - i a) dh/dzbar``
    with the Wirtinger derivative ``dh/dzbar = (h_x + i h_y) / 2``."""
    ha, hx, hy, hd = block_partials(state.to_block(), h)
    dzbar = 0.5 * (hx + 1j * hy)
    d = state.skew
    return (hd.T - hd + 1j * ha * np.eye(len(state.z))) @ state.z + 2 * (d - 1j * state.a * np.eye(len(d))) @ dzbar


def cubic_rhs(state: ComplexState, c2: Optional[float] = None) -> np.ndarray:
    """``dz/dt`` for the quartic Hamiltonian; ``c2`` replaces ``zbar^T z``
    when given (it is a constant of the motion)."""
    z = state.z
    if c2 is None:
        c2 = float(np.real(np.vdot(z, z)))
    d = state.skew
    a = state.a
    zz = z @ z
    half = (1 + c2) * (d @ z) - 1j * a * (1 + c2) * z - zz * (d @ z.conj() - 1j * a * z.conj())
    return 2 * half


def quartic_hamiltonian() -> ScalarField:
    """``h = ((zbar^T z)^2 - |z^T z|^2 + Tr D^2 - 2 a^2) / 2`` on the matrix chart."""
    from .invariants import h_m

    h1, h2, h4 = h_m(1), h_m(2), h_m(4)

    def value(p):
        return 0.5 * (h1(p) - h4(p)) + h2(p) ** 2

    def grad(p):
        return 0.5 * (h1.gradient(p) - h4.gradient(p)) + 2 * h2(p) * h2.gradient(p)

    return ScalarField(value, grad, name="quartic")


def cubic_flow(z0, a: float, delta, cfg: IntegratorConfig, c2: Optional[float] = None) -> Trajectory:
    z0 = np.asarray(z0, dtype=complex)
    if c2 is None:
        c2 = float(np.real(np.vdot(z0, z0)))
    st = ComplexState(z0, a, np.asarray(delta, dtype=float))

    def rhs(z):
        return cubic_rhs(ComplexState(z, st.a, st.delta), c2)

    return integrate(rhs, z0, cfg, chart="complex")


def complex_flow(state: ComplexState, h: ScalarField, cfg: IntegratorConfig) -> Trajectory:
    def rhs(z):
        return complex_rhs(ComplexState(z, state.a, state.delta), h)

    return integrate(rhs, np.asarray(state.z, dtype=complex), cfg, chart="complex")


# ---------------------------------------------------------------------------
# skew normal form and the reduced chart


def skew_normal_form(delta):
    """Real orthogonal ``O`` and ``lambdas`` (descending, ``>= 0``) with
    ``O (delta - delta^T) O^T = blockdiag(lambda_1 eps, ..., [0])``.

    Built from the Hermitian eigenproblem of ``i D``: an eigenvector
    ``p + i q`` with eigenvalue ``mu > 0`` spans an invariant plane, in which
    the first row is the projection of the first basis vector not orthogonal
    to the plane and the second is ``-D o_1 / mu``.  The null space is
    completed by an orthonormal basis with first nonzero entries positive.
    """
    delta = np.asarray(delta, dtype=float)
    d = np.triu(delta, 1)
    d = d - d.T
    n = d.shape[0]
    w, v = np.linalg.eigh(1j * d)
    scale = max(1.0, np.abs(d).max(initial=0.0))
    tol = 1e-12 * scale * n
    rows = []
    lams = []
    for idx in np.argsort(-w):
        mu = w[idx]
        if mu <= tol:
            break
        vec = v[:, idx]
        # the invariant plane of this block; any rotation inside it is allowed,
        # so o1 is taken along the first basis vector with a nonzero projection
        plane = np.stack([vec.real, vec.imag])
        qb, _ = np.linalg.qr(plane.T)
        proj = qb @ qb.T
        k = _first_nonzero(np.linalg.norm(proj, axis=0))
        o1 = proj[:, k] / np.linalg.norm(proj[:, k])
        o2 = -(d @ o1) / mu
        o2 = o2 / np.linalg.norm(o2)
        rows.extend([o1, o2])
        lams.append(mu)
    m_pairs = n // 2
    if len(rows) < n:
        basis = np.array(rows) if rows else np.zeros((0, n))
        # orthonormal complement of the rows found so far
        proj = np.eye(n) - basis.T @ basis
        u, s, _ = np.linalg.svd(proj)
        rest = u[:, : n - len(rows)].T
        for r in rest:
            rows.append(r if r[_first_nonzero(r)] >= 0 else -r)
        lams.extend([0.0] * (m_pairs - len(lams)))
    o = np.array(rows)
    # re-orthonormalise against round-off
    qm, rm = np.linalg.qr(o.T)
    o = (qm * np.sign(np.diag(rm))).T
    return o, np.array(lams[:m_pairs])


def _first_nonzero(v, tol=1e-10):
    idx = np.flatnonzero(np.abs(v) > tol * max(1.0, np.abs(v).max()))
    return int(idx[0]) if idx.size else 0


def block_skew(lams, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    for k, lam in enumerate(lams):
        out[2 * k: 2 * k + 2, 2 * k: 2 * k + 2] = lam * EPS2
    return out


@dataclass
class ReducedState:
    xi: np.ndarray                 # (M, 2) complex
    xi0: Optional[complex]
    lambdas: np.ndarray
    O: np.ndarray

    @property
    def odd(self) -> bool:
        return self.xi0 is not None

    def pack(self) -> np.ndarray:
        flat = self.xi.ravel()
        if self.odd:
            flat = np.concatenate([flat, [self.xi0]])
        return flat

    def with_packed(self, flat) -> "ReducedState":
        m = len(self.lambdas)
        xi = np.asarray(flat[: 2 * m]).reshape(m, 2)
        xi0 = flat[2 * m] if self.odd else None
        return ReducedState(xi, xi0, self.lambdas, self.O)

    def to_z(self) -> np.ndarray:
        return self.O.T @ self.pack()


def to_reduced(z, delta) -> ReducedState:
    o, lams = skew_normal_form(delta)
    w = o @ np.asarray(z, dtype=complex)
    n = len(w)
    m = n // 2
    xi = w[: 2 * m].reshape(m, 2)
    xi0 = w[2 * m] if n % 2 else None
    return ReducedState(xi, xi0, lams, o)


def reduced_rhs(state: ReducedState, a: float, c2: float) -> np.ndarray:
    """Packed ``d(xi_1, .., xi_M[, xi_0])/dt``."""
    s = np.sum(state.xi[:, 0] ** 2 + state.xi[:, 1] ** 2)
    if state.odd:
        s = s + state.xi0 ** 2
    out = np.empty_like(state.xi)
    for k, lam in enumerate(state.lambdas):
        xk = state.xi[k]
        out[k] = 2 * (lam * (1 + c2) * (EPS2 @ xk) - 1j * a * (1 + c2) * xk
                      - s * (lam * (EPS2 @ xk.conj()) - 1j * a * xk.conj()))
    flat = out.ravel()
    if state.odd:
        x0 = state.xi0
        d0 = 2 * (-1j * a * (1 + c2) * x0 + 1j * a * s * np.conj(x0))
        flat = np.concatenate([flat, [d0]])
    return flat


def reduced_flow(state: ReducedState, a: float, c2: float, cfg: IntegratorConfig) -> Trajectory:
    def rhs(flat):
        return reduced_rhs(state.with_packed(flat), a, c2)

    return integrate(rhs, state.pack().astype(complex), cfg, chart="reduced")


def block_invariants(xi, lam: float, a: float):
    """``(u, w, c_k, r_k)`` for one pair: ``u = |xi|^2``,
    ``xibar^T eps xi = i w``, ``c_k = lam u + a w``, ``r_k = lam w + a u``."""
    xi = np.asarray(xi)
    u = float(np.real(np.vdot(xi, xi)))
    w = float(np.imag(xi.conj() @ EPS2 @ xi))
    return u, w, lam * u + a * w, lam * w + a * u


# ---------------------------------------------------------------------------
# rotated chart


@dataclass
class RotatedState:
    """``q, p, r`` per component; in the odd case component 0 is the lone
    ``xi_0`` with ``lambda = 0`` and ``r_0 = a |eta_0|``."""

    q: np.ndarray
    p: np.ndarray
    r: np.ndarray
    phi: float
    lams: np.ndarray
    odd: bool = False

    def pack(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, self.r, [self.phi]])

    def with_packed(self, flat) -> "RotatedState":
        m = len(self.q)
        return RotatedState(flat[:m], flat[m: 2 * m], flat[2 * m: 3 * m], float(flat[3 * m]),
                            self.lams, self.odd)

    def etas(self) -> np.ndarray:
        return np.exp(1j * self.phi) * (self.q + 1j * self.p)


@dataclass
class RotatedParams:
    a: float
    c2: float
    rho_mod: float
    c: np.ndarray


def reduced_etas(state: ReducedState) -> np.ndarray:
    """``eta_k = xi_k^T xi_k`` with ``eta_0 = xi_0^2`` first in the odd case."""
    et = state.xi[:, 0] ** 2 + state.xi[:, 1] ** 2
    if state.odd:
        et = np.concatenate([[state.xi0 ** 2], et])
    return et


def to_rotated(state: ReducedState, a: float, c2: float):
    """Rotated coordinates and parameters from a reduced state."""
    etas = reduced_etas(state)
    lams = np.asarray(state.lambdas, dtype=float)
    rs, cs = [], []
    for k, lam in enumerate(lams):
        u, w, ck, rk = block_invariants(state.xi[k], lam, a)
        rs.append(rk)
        cs.append(ck)
    if state.odd:
        u0 = abs(state.xi0) ** 2
        rs = [a * u0] + rs
        cs = [0.0] + cs
        lams = np.concatenate([[0.0], lams])
    s = np.sum(etas)
    rho_mod = float(abs(s))
    phi = float(np.angle(s)) if rho_mod > 0 else 0.0
    qp = np.exp(-1j * phi) * etas
    st = RotatedState(qp.real.copy(), qp.imag.copy(), np.array(rs), phi, lams, state.odd)
    return st, RotatedParams(a, c2, rho_mod, np.array(cs))


def rotated_rhs(state: RotatedState, params: RotatedParams) -> np.ndarray:
    """Packed ``(dq, dp, dr, dphi)``."""
    sr = np.sum(state.r)
    a2 = params.a ** 2
    dq = 4 * state.p * sr
    dp = -4 * state.q * sr + 4 * params.rho_mod * state.r
    dr = 4 * params.rho_mod * (a2 - state.lams ** 2) * state.p
    return np.concatenate([dq, dp, dr, [phase_rhs(state, params)]])


def phase_rhs(state: RotatedState, params: RotatedParams) -> float:
    """``dphi/dt = -4 a (1 + c^2) + 4 sum r``."""
    return float(-4 * params.a * (1 + params.c2) + 4 * np.sum(state.r))


def rotated_flow(state: RotatedState, params: RotatedParams, cfg: IntegratorConfig) -> Trajectory:
    def rhs(flat):
        return rotated_rhs(state.with_packed(flat), params)

    return integrate(rhs, state.pack(), cfg, chart="rotated")


def rotated_invariants(state: RotatedState, params: RotatedParams) -> dict:
    a2 = params.a ** 2
    k2 = a2 - state.lams ** 2
    sr = np.sum(state.r)
    out = {
        "sum_p": float(np.sum(state.p)),
        "sum_q": float(np.sum(state.q)),
        "g": float(np.sum(k2 * params.rho_mod * state.q) - 0.5 * sr * sr),
        "r_constraint": float(np.max(np.abs(state.r ** 2 - k2 * (state.q ** 2 + state.p ** 2)
                                            - params.c ** 2))),
    }
    if np.all(np.abs(k2) > 1e-14):
        out["f"] = float(np.sum(state.r / k2))
    return out


def eta_rhs(etas, r, params: RotatedParams) -> np.ndarray:
    """``d eta_k/dt = -4 i a (1 + c^2) eta_k + 4 i r_k sum_l eta_l``."""
    s = np.sum(etas)
    return -4j * params.a * (1 + params.c2) * etas + 4j * np.asarray(r) * s


# ---------------------------------------------------------------------------
# polar angles of the pairs


def xi_norms(eta, r, c, lam, a):
    """``(|Re xi|^2, |Im xi|^2)`` from ``eta``, ``r`` and ``c`` of one pair."""
    k2 = a * a - lam * lam
    u = (a * r - lam * c) / k2
    return 0.5 * (np.real(eta) + u), 0.5 * (-np.real(eta) + u)


def angles_rhs(etas, r, params: RotatedParams, lams, odd: bool = False,
               tol: float = 1e-10, t=None):
    """``(d alpha_k, d beta_k)`` for the pairs.

    ``etas``, ``r``, ``lams`` and ``params.c`` follow the rotated layout (the
    lone component first when ``odd``); only the pairs get angles.  With
    ``S = s_1 + i s_2 = sum eta``, ``u`` and ``w`` recovered from ``(r, c)``::

        alpha' = -2 lam (1 + c^2) + 2 lam s_1 + (a w (1 + c^2 + s_1) + lam s_2 Im eta) / |Re xi|^2
        beta'  = -2 lam (1 + c^2) - 2 lam s_1 + (a w (1 + c^2 - s_1) + lam s_2 Im eta) / |Im xi|^2
    """
    etas = np.asarray(etas)
    r = np.asarray(r, dtype=float)
    lams = np.asarray(lams, dtype=float)
    a, c2 = params.a, params.c2
    s = np.sum(etas)
    s1, s2 = float(np.real(s)), float(np.imag(s))
    out_a, out_b = [], []
    for k in range(1 if odd else 0, len(etas)):
        lam, ck, et = lams[k], params.c[k], etas[k]
        k2 = a * a - lam * lam
        if abs(k2) < tol:
            raise SingularConfiguration("a^2 = lambda_k^2 leaves the pair norms undetermined", t)
        w = (a * ck - lam * r[k]) / k2
        nre, nim = xi_norms(et, r[k], ck, lam, a)
        if nre < tol or nim < tol:
            raise SingularConfiguration("a polar angle is undefined (vanishing real or imaginary part)", t)
        base = -2 * lam * (1 + c2)
        common = lam * s2 * float(np.imag(et))
        out_a.append(base + 2 * lam * s1 + (a * w * (1 + c2 + s1) + common) / nre)
        out_b.append(base - 2 * lam * s1 + (a * w * (1 + c2 - s1) + common) / nim)
    return np.array(out_a), np.array(out_b)


def polar_angles(xi):
    xi = np.asarray(xi)
    re, im = xi.real, xi.imag
    return float(np.arctan2(re[1], re[0])), float(np.arctan2(im[1], im[0]))


def xi_from_polar(eta, r, c, lam, a, alpha, beta) -> np.ndarray:
    nr, ni = xi_norms(eta, r, c, lam, a)
    nr, ni = np.sqrt(max(nr, 0.0)), np.sqrt(max(ni, 0.0))
    return nr * np.array([np.cos(alpha), np.sin(alpha)]) + 1j * ni * np.array([np.cos(beta), np.sin(beta)])


# ---------------------------------------------------------------------------
# reports


@dataclass
class ConservationReport:
    drifts: dict

    def max_drift(self) -> float:
        return max(self.drifts.values()) if self.drifts else 0.0

    def to_json(self) -> dict:
        return {k: float(v) for k, v in self.drifts.items()}


def conservation_report(traj: Trajectory, invariants: dict) -> ConservationReport:
    """``max_t |F(t) - F(0)| / (1 + |F(0)|)`` for each named callable ``F``
    evaluated on the trajectory states."""
    drifts = {}
    for name, fn in invariants.items():
        vals = np.array([fn(s) for s in traj.states], dtype=complex)
        f0 = vals[0]
        drifts[str(name)] = float(np.max(np.abs(vals - f0)) / (1.0 + abs(f0)))
    return ConservationReport(drifts)
