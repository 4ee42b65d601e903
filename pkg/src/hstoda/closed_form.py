"""Explicit solutions of the cubic flow for two, three and four complex components.

Two components: the rotated variables are stationary, the phase is linear
in time and the pair angles integrate to arctangents.  Three or four
components: ``r_1`` moves between two roots of a quartic and is recovered by
quadrature inversion; everything else follows from the linear invariants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .dynamics import (
    ComplexState,
    RotatedParams,
    SingularConfiguration,
    angles_rhs,
    block_invariants,
    polar_angles,
    reduced_etas,
    to_reduced,
    to_rotated,
    xi_from_polar,
)


class DegenerateModulus(ArithmeticError):
    pass


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# two components


def _unwrapped_arctan(k: float, theta):
    """Continuous antiderivative branch of ``arctan(k tan(theta / 2))``."""
    theta = np.asarray(theta, dtype=float)
    return np.arctan(k * np.tan(theta / 2)) + np.pi * np.floor((theta + np.pi) / (2 * np.pi))


@dataclass
class N2Solution:
    """Trigonometric solution for ``z`` in ``C^2``.

    ``alpha' = B + 2 K / (c^2 + rho cos theta)``,
    ``beta'  = B + 2 K / (c^2 - rho cos theta)``, ``theta = omega1 t + phi0``.
    """

    omega1: float
    phi0: float
    r1: float
    c2: float
    rho: float
    c1: float
    lam1: float
    a: float
    w1: float
    alpha0: float
    beta0: float
    O: np.ndarray = field(repr=False)
    branch: int = 1
    method: str = "closed"

    @property
    def slope(self) -> float:
        return 2 * (self.c1 - self.lam1 * (1 + self.c2))

    @property
    def quotient(self) -> float:
        return self.a * self.w1 + self.lam1 * (self.rho ** 2 - self.c2 ** 2)

    def theta(self, t):
        return self.omega1 * np.asarray(t, dtype=float) + self.phi0

    def rates(self, t):
        c = self.rho * np.cos(self.theta(t))
        k = 2 * self.quotient
        return self.slope + k / (self.c2 + c), self.slope + k / (self.c2 - c)

    def angles(self, t):
        t = np.asarray(t, dtype=float)
        if self.method == "quadrature":
            return self._angles_quad(t)
        b, k = self.slope, 2 * self.quotient
        if self.rho == 0.0:
            return self.alpha0 + (b + k / self.c2) * t, self.beta0 + (b + k / self.c2) * t
        kappa = self.c2 / self.rho
        root = np.sqrt(kappa * kappa - 1)
        th, th0 = self.theta(t), self.phi0
        kp = (kappa - 1) / root
        km = (kappa + 1) / root
        gp = _unwrapped_arctan(kp, th) - _unwrapped_arctan(kp, th0)
        gm = _unwrapped_arctan(km, th) - _unwrapped_arctan(km, th0)
        amp = 2 * k / (self.rho * self.omega1 * root)
        return self.alpha0 + b * t + amp * gp, self.beta0 + b * t + amp * gm

    def _angles_quad(self, t):
        out_a, out_b = [], []
        for tt in np.atleast_1d(t):
            ia = quad(lambda s: self.rates(s)[0], 0.0, tt, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
            ib = quad(lambda s: self.rates(s)[1], 0.0, tt, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
            out_a.append(self.alpha0 + ia)
            out_b.append(self.beta0 + ib)
        return np.array(out_a).reshape(np.shape(t)), np.array(out_b).reshape(np.shape(t))

    def xi(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        al, be = self.angles(t)
        c = self.rho * np.cos(self.theta(t))
        nr = np.sqrt(np.maximum(self.c2 + c, 0.0) / 2)
        ni = np.sqrt(np.maximum(self.c2 - c, 0.0) / 2)
        re = nr[:, None] * np.stack([np.cos(al), np.sin(al)], axis=1)
        im = ni[:, None] * np.stack([np.cos(be), np.sin(be)], axis=1)
        return re + 1j * im

    def __call__(self, t) -> np.ndarray:
        """``z(t)`` as an array of shape ``(len(t), 2)``."""
        return self.xi(t) @ self.O


def solve_n2(state: ComplexState, force_quadrature: bool = False, tol: float = 1e-10) -> N2Solution:
    z = np.asarray(state.z, dtype=complex)
    if z.shape != (2,):
        raise PreconditionError("solve_n2 needs two complex components")
    a = float(state.a)
    c2 = float(np.real(np.vdot(z, z)))
    red = to_reduced(z, state.delta)
    lam = float(red.lambdas[0])
    xi = red.xi[0]
    u, w, c1, r1 = block_invariants(xi, lam, a)
    eta = xi @ xi
    rho = float(abs(eta))
    if rho > 0 and abs(c2 * c2 / (rho * rho) - 1) < tol:
        raise DegenerateModulus("c^4 / rho^2 = 1: the imaginary or real part of xi vanishes")
    phi0 = float(np.angle(eta)) if rho > 0 else 0.0
    omega = -4 * a * (1 + c2) + 4 * r1
    al0, be0 = polar_angles(xi)
    method = "closed"
    if force_quadrature or (rho > 0 and abs(omega) < 1e-12):
        method = "quadrature"
    return N2Solution(omega, phi0, r1, c2, rho, c1, lam, a, w, al0, be0, red.O,
                      branch=1 if r1 >= 0 else -1, method=method)


@dataclass
class N2Report:
    max_norm_residual: float
    max_area_residual: float

    def to_json(self):
        return {"max_norm_residual": self.max_norm_residual, "max_area_residual": self.max_area_residual}


def n2_invariant_checks(sol: N2Solution, ts) -> N2Report:
    """``|x|^2 + |y|^2 = c^2`` and ``|x| |y| sin(angle from x to y) = +-sqrt(c^4 - rho^2) / 2``."""
    z = sol(ts)
    x, y = z.real, z.imag
    norm_res = np.abs(np.sum(x * x + y * y, axis=1) - sol.c2)
    area = x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]
    target = 0.5 * np.sqrt(max(sol.c2 ** 2 - sol.rho ** 2, 0.0))
    area_res = np.abs(np.abs(area) - target)
    return N2Report(float(norm_res.max()), float(area_res.max()))


# ---------------------------------------------------------------------------
# three and four components


@dataclass
class QuarticData:
    """Data of the quartic ``w4`` with ``p_1^2 - w4(r_1) = e``.

    ``k1 = a^2 - lam1^2``, ``kk = a^2 - lamk^2``, ``dl = lamk^2 - lam1^2``.
    """

    a: float
    lam1: float
    lamk: float
    rho: float
    f: float
    g: float
    c1: float
    e: float = 0.0

    @property
    def k1(self):
        return self.a ** 2 - self.lam1 ** 2

    @property
    def kk(self):
        return self.a ** 2 - self.lamk ** 2

    @property
    def dl(self):
        return self.lamk ** 2 - self.lam1 ** 2

    def rk(self, r1):
        return self.kk * self.f - self.kk / self.k1 * r1

    def rsum(self, r1):
        return self.kk * self.f + self.dl / self.k1 * r1

    def q1(self, r1):
        rs = self.rsum(r1)
        return (self.g + 0.5 * rs * rs - self.rho ** 2 * self.kk) / (self.rho * self.dl)

    def qk(self, r1):
        return self.rho - self.q1(r1)

    def full_poly(self) -> np.ndarray:
        """Coefficients (highest first) of ``(r^2 - c1^2) / k1 - q1(r)^2``."""
        p_rs = np.array([self.dl / self.k1, self.kk * self.f])
        p_q1 = (0.5 * np.polymul(p_rs, p_rs) + np.array([0.0, 0.0, self.g - self.rho ** 2 * self.kk])) / (
            self.rho * self.dl)
        return np.polysub(np.array([1.0 / self.k1, 0.0, -self.c1 ** 2 / self.k1]), np.polymul(p_q1, p_q1))

    def coefficients(self) -> np.ndarray:
        """``w4`` coefficients (highest first); the constant term is zero."""
        c = self.full_poly().copy()
        c[-1] = 0.0
        return c


def quartic_w4(r1, data: QuarticData):
    return np.polyval(data.coefficients(), r1)


def quartic_w4_four_term(r1, data: QuarticData):
    """A four-term expansion of the quartic with different ``r^4``, ``r^3``
    and ``r^2`` coefficients; kept as a reference point for the tests, it is
    not conserved along the flow."""
    k1, kk, dl, rho, f, g = data.k1, data.kk, data.dl, data.rho, data.f, data.g
    r1 = np.asarray(r1, dtype=float)
    c4 = -dl ** 2 / (4 * rho * k1 ** 4)
    c3 = -kk * dl / (rho ** 2 * k1 ** 3)
    c2 = -(3 * kk ** 2 * f ** 2 / (rho ** 2 * k1 ** 2) + (g - rho ** 2 * kk) / (rho ** 2 * k1 ** 2) - 1 / k1)
    c1 = -2 * kk * (g - rho ** 2 * kk + 0.5 * kk ** 2 * f ** 2) * f / (rho ** 2 * k1 * dl)
    return c4 * r1 ** 4 + c3 * r1 ** 3 + c2 * r1 ** 2 + c1 * r1


def _real_roots(coeffs, tol=1e-9):
    roots = np.roots(coeffs)
    return sorted(float(r.real) for r in roots if abs(r.imag) <= tol * max(1.0, abs(r)))


@dataclass
class N34Solution:
    """Quadrature solution; call with increasing sample times."""

    data: QuarticData
    odd: bool
    lo: float
    hi: float
    s0: float
    period: float
    phi0: float
    c2: float
    lams: np.ndarray
    cs: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray
    O: np.ndarray = field(repr=False)
    xi0_init: Optional[complex] = None
    k_sign: float = 1.0
    stationary: bool = False
    r1_const: float = 0.0
    _quo: Optional[np.ndarray] = field(default=None, repr=False)

    # r_1 = m + h sin s and dt/ds = 1 / (4 rho |k1| sqrt(Q(r)))
    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def half(self):
        return 0.5 * (self.hi - self.lo)

    def _q_of_r(self, r):
        # P(r) / ((r - lo)(hi - r)), the positive smooth factor
        if self._quo is None:
            self._quo, _ = np.polydiv(np.polyadd(self.data.coefficients(), [self.data.e]),
                                      np.polymul([1.0, -self.lo], [-1.0, self.hi]))
        return np.polyval(self._quo, r)

    def _dtds(self, s):
        r = self.mid + self.half * np.sin(s)
        qv = np.maximum(self._q_of_r(r), 1e-300)
        return 1.0 / (4 * self.data.rho * abs(self.data.k1) * np.sqrt(qv))

    def _build_tables(self, n_seg: int = 2048):
        """Tabulate ``t(s)`` and ``int r_1 dt`` over one period of ``s``.

        Segment integrals use 8-point Gauss-Legendre; the tables are joined
        by cubic Hermite interpolation with the exact derivatives.
        """
        nodes = self.s0 + np.linspace(0.0, 2 * np.pi, n_seg + 1)
        x, w = np.polynomial.legendre.leggauss(8)
        a, b = nodes[:-1], nodes[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + half[:, None] * x[None, :]
        dt = self._dtds(pts)
        rr = self.mid + self.half * np.sin(pts)
        seg_t = (dt * w).sum(axis=1) * half
        seg_r = (rr * dt * w).sum(axis=1) * half
        tau = np.concatenate([[0.0], np.cumsum(seg_t)])
        rint = np.concatenate([[0.0], np.cumsum(seg_r)])
        d_nodes = self._dtds(nodes)
        r_nodes = self.mid + self.half * np.sin(nodes)
        self.period = float(tau[-1])
        self._r_period = float(rint[-1])
        self._s_of_tau = CubicHermiteSpline(tau, nodes, 1.0 / d_nodes)
        self._rint_of_s = CubicHermiteSpline(nodes, rint, r_nodes * d_nodes)

    def s_of_t(self, t: float) -> float:
        n = np.floor(t / self.period)
        return float(self._s_of_tau(t - n * self.period) + 2 * np.pi * n)

    def r1_p1(self, t: float):
        if self.stationary:
            return self.r1_const, 0.0
        s = self.s_of_t(t)
        r = self.mid + self.half * np.sin(s)
        qv = max(self._q_of_r(r), 0.0)
        p = self.k_sign * self.half * np.cos(s) * np.sqrt(qv)
        return r, p

    def r1_integral(self, t: float) -> float:
        """``int_0^t r_1``."""
        if self.stationary:
            return self.r1_const * t
        n = np.floor(t / self.period)
        s = self.s_of_t(t) - 2 * np.pi * n
        return float(n * self._r_period + self._rint_of_s(s))

    def phase(self, t: float) -> float:
        d = self.data
        lin = 4 * (d.kk * d.f - d.a * (1 + self.c2))
        return self.phi0 + lin * t + 4 * d.dl / d.k1 * self.r1_integral(t)

    def rotated(self, t: float):
        """``(q, p, r)`` in the rotated layout (component ``k`` first when odd)."""
        r1, p1 = self.r1_p1(t)
        d = self.data
        q1, qk, rk = d.q1(r1), d.qk(r1), d.rk(r1)
        if self.odd:
            return np.array([qk, q1]), np.array([-p1, p1]), np.array([rk, r1])
        return np.array([q1, qk]), np.array([p1, -p1]), np.array([r1, rk])

    def etas(self, t: float) -> np.ndarray:
        q, p, _ = self.rotated(t)
        return np.exp(1j * self.phase(t)) * (q + 1j * p)

    def evaluate(self, ts) -> np.ndarray:
        """``z`` at the sorted sample times ``ts``, shape ``(len(ts), n)``."""
        ts = np.asarray(ts, dtype=float)
        params = RotatedParams(self.data.a, self.c2, self.data.rho, self.cs)

        def rates(t):
            q, p, r = self.rotated(t)
            et = np.exp(1j * self.phase(t)) * (q + 1j * p)
            return angles_rhs(et, r, params, self.lams, odd=self.odd, t=t)

        al = np.array(self.alpha0, dtype=float)
        be = np.array(self.beta0, dtype=float)
        npair = len(al)
        out = []
        t_prev = 0.0
        prev0 = self.xi0_init
        for t in ts:
            if t > t_prev:
                for j in range(npair):
                    al[j] += quad(lambda s: rates(s)[0][j], t_prev, t, limit=200, epsabs=1e-12, epsrel=1e-11)[0]
                    be[j] += quad(lambda s: rates(s)[1][j], t_prev, t, limit=200, epsabs=1e-12, epsrel=1e-11)[0]
            t_prev = t
            q, p, r = self.rotated(t)
            et = np.exp(1j * self.phase(t)) * (q + 1j * p)
            off = 1 if self.odd else 0
            pairs = [xi_from_polar(et[j + off], r[j + off], self.cs[j + off], self.lams[j + off],
                                   self.data.a, al[j], be[j]) for j in range(npair)]
            flat = np.concatenate(pairs)
            if self.odd:
                x0 = np.sqrt(et[0])
                if prev0 is not None and abs(x0 - prev0) > abs(x0 + prev0):
                    x0 = -x0
                prev0 = x0
                flat = np.concatenate([flat, [x0]])
            out.append(self.O.T @ flat)
        return np.array(out)

    __call__ = evaluate


def solve_n34(state: ComplexState, tol: float = 1e-10) -> N34Solution:
    """Quadrature solution for three or four complex components.

    The second component is the other pair (four components) or the lone
    ``xi_0`` with ``lambda = 0`` (three components).
    """
    z = np.asarray(state.z, dtype=complex)
    n = z.size
    if n not in (3, 4):
        raise PreconditionError("solve_n34 needs three or four complex components")
    a = float(state.a)
    c2 = float(np.real(np.vdot(z, z)))
    red = to_reduced(z, state.delta)
    rot, params = to_rotated(red, a, c2)
    odd = red.odd
    i1, ik = (1, 0) if odd else (0, 1)
    lam1, lamk = rot.lams[i1], rot.lams[ik]
    if abs(a * a - lam1 * lam1) < tol:
        raise PreconditionError("a^2 = lambda_1^2")
    if abs(a * a - lamk * lamk) < tol:
        raise PreconditionError("a^2 = lambda_k^2")
    if abs(lamk * lamk - lam1 * lam1) < tol:
        raise PreconditionError("lambda_k^2 = lambda_1^2")
    rho = params.rho_mod
    if rho < tol:
        raise PreconditionError("sum of eta vanishes; the rotating frame is undefined")
    k1, kk = a * a - lam1 * lam1, a * a - lamk * lamk
    r1, rk = rot.r[i1], rot.r[ik]
    f = r1 / k1 + rk / kk
    g = rho * (kk * rot.q[ik] + k1 * rot.q[i1]) - 0.5 * (r1 + rk) ** 2
    data = QuarticData(a, lam1, lamk, rho, f, g, params.c[i1])
    p1 = rot.p[i1]
    data.e = float(p1 * p1 - quartic_w4(r1, data))
    poly = np.polyadd(data.coefficients(), [data.e])
    pairs_alpha = [polar_angles(x) for x in red.xi]
    al0 = np.array([v[0] for v in pairs_alpha])
    be0 = np.array([v[1] for v in pairs_alpha])
    common = dict(data=data, odd=odd, phi0=rot.phi, c2=c2, lams=rot.lams, cs=params.c,
                  alpha0=al0, beta0=be0, O=red.O, xi0_init=red.xi0 if odd else None,
                  k_sign=1.0 if k1 > 0 else -1.0)

    roots = _real_roots(poly)
    scale = max(1.0, abs(r1))
    below = [x for x in roots if x <= r1 + 1e-9 * scale]
    above = [x for x in roots if x >= r1 - 1e-9 * scale]
    if p1 * p1 < 1e-24 and len(below) and len(above):
        # r1 at a root: pick the side where the polynomial is positive
        eps = 1e-7 * scale
        if np.polyval(poly, r1 + eps) > 0:
            below = [r1]
            above = [x for x in roots if x > r1 + eps]
        elif np.polyval(poly, r1 - eps) > 0:
            above = [r1]
            below = [x for x in roots if x < r1 - eps]
        else:
            return N34Solution(lo=r1, hi=r1, s0=0.0, period=np.inf, stationary=True, r1_const=r1, **common)
    if not below or not above:
        raise DegenerateModulus("r_1 is not confined between two real roots")
    lo, hi = max(below), min(above)
    # polish the bracketing roots
    fpoly = lambda x: np.polyval(poly, x)
    lo = _polish(fpoly, lo, r1)
    hi = _polish(fpoly, hi, r1)
    others = [x for x in roots if abs(x - lo) > 1e-6 * scale and abs(x - hi) > 1e-6 * scale]
    for x in others:
        if min(abs(x - lo), abs(x - hi)) < tol * scale:
            raise DegenerateModulus("repeated root of e + w4 at a turning point")
    if hi - lo < tol * scale:
        return N34Solution(lo=r1, hi=r1, s0=0.0, period=np.inf, stationary=True, r1_const=r1, **common)
    h = 0.5 * (hi - lo)
    m = 0.5 * (hi + lo)
    s0 = float(np.arcsin(np.clip((r1 - m) / h, -1.0, 1.0)))
    # choose the branch whose cos matches the sign of k1 * p1
    want = np.sign(k1 * p1)
    if want < 0:
        s0 = np.pi - s0
    sol = N34Solution(lo=lo, hi=hi, s0=s0, period=1.0, **common)
    sol._build_tables()
    return sol


def _polish(fn, x0, inside):
    """Refine a root near ``x0`` using a sign change towards ``inside``."""
    d = inside - x0
    if d == 0:
        return x0
    for step in (1e-10, 1e-8, 1e-6, 1e-4):
        x1 = x0 - step * np.sign(d) * max(1.0, abs(x0))
        x2 = x0 + step * np.sign(d) * max(1.0, abs(x0))
        if fn(x1) * fn(x2) < 0:
            return brentq(fn, min(x1, x2), max(x1, x2), xtol=1e-15, rtol=1e-15)
    return x0


@dataclass
class ComparisonReport:
    max_error: float
    mean_error: float
    per_component: list

    def to_json(self):
        return {"max_error": self.max_error, "mean_error": self.mean_error,
                "per_component": [float(v) for v in self.per_component]}


def compare(z_closed, z_numeric) -> ComparisonReport:
    err = np.abs(np.asarray(z_closed) - np.asarray(z_numeric))
    return ComparisonReport(float(err.max()), float(err.mean()), list(err.max(axis=0)))
