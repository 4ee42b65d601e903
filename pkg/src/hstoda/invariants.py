"""Casimirs, integrals of motion and coadjoint actions.

Every invariant is exposed as a :class:`~hstoda.poisson.ScalarField` with an
analytic gradient so that involution and Casimir checks are not polluted by
finite-difference error.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AlphaCoefficients,
    as_sequence,
    build_alpha,
    embed_alpha,
    project_plus_alpha,
)
from .poisson import BracketKind, ScalarField, bracket_from_grads, coordinate_mask


# ---------------------------------------------------------------------------
# trace-power families


def trace_power(rho: np.ndarray, l: int) -> float:
    return float(np.trace(np.linalg.matrix_power(rho, l))) / l


def I_l(l: int) -> ScalarField:
    """``(1/l) Tr rho^l`` on the full matrix space."""
    if l < 1:
        raise ValueError("l must be positive")
    return ScalarField(lambda p: trace_power(p, l),
                       lambda p: np.linalg.matrix_power(p, l - 1).T, name=f"I_l:l={l}")


def I_l_alpha(coeffs: AlphaCoefficients, l: int) -> ScalarField:
    """``(1/l) Tr (rho_- + rho_0 + alpha(rho_-^T))^l`` in the lower chart."""

    def func(p):
        return trace_power(embed_alpha(coeffs, p), l)

    def grad(p):
        pw = np.linalg.matrix_power(embed_alpha(coeffs, p), l - 1)
        g = np.tril(pw.T, -1) + np.tril(coeffs.alpha.T * pw, -1)
        return g + np.diag(np.diag(pw))

    return ScalarField(func, grad, name=f"I_l_alpha:l={l}")


def I_l_minus0(l: int) -> ScalarField:
    return ScalarField(lambda p: float(np.sum(np.diag(p) ** l)) / l,
                       lambda p: np.diag(np.diag(p) ** (l - 1)), name=f"I_l_minus0:l={l}")


def _m_matrix(rho, tail, eta, delta):
    rt = rho.T
    return (tail * rho @ rho - (rho * eta) @ rt * delta
            - (eta[:, None] * rt * delta) @ rho + (eta[:, None] * (rt @ rt)) * delta)


def trace_m_power(rho, tail, eta, delta, k: int) -> float:
    """``Tr M^k`` with ``M = tail rho^2 - rho eta rho^T delta - eta rho^T delta rho
    + eta (rho^T)^2 delta``; ``eta`` and ``delta`` are diagonals as vectors."""
    m = _m_matrix(rho, tail, eta, delta)
    return float(np.trace(np.linalg.matrix_power(m, k)))


def trace_m_power_grad(rho, tail, eta, delta, k: int) -> np.ndarray:
    rho = np.triu(rho, 1)
    m = _m_matrix(rho, tail, eta, delta)
    p = k * np.linalg.matrix_power(m, k - 1)
    rt = rho.T
    ec, dc = eta[:, None], delta[:, None]
    g = tail * (rho @ p + p @ rho).T
    g -= ((ec * rt * delta) @ p).T        # Tr(P drho E rho^T D)
    g -= dc * (p @ rho) * eta              # Tr(P rho E drho^T D)
    g -= (dc * rho @ p) * eta              # Tr(P E drho^T D rho)
    g -= (p @ (ec * rt) * delta).T        # Tr(P E rho^T D drho)
    g += (rt @ (dc * p)) * eta             # Tr(P E drho^T rho^T D)
    g += (dc * p) @ (ec * rt)              # Tr(P E rho^T drho^T D)
    return np.triu(g, 1)


def Ik_alpha(coeffs: AlphaCoefficients, k: int) -> ScalarField:
    """``Tr(alpha_tail rho^2 - rho eta rho^T delta - eta rho^T delta rho
    + eta (rho^T)^2 delta)^k`` on strictly upper triangular ``rho``."""
    t, e, d = coeffs.alpha_tail, np.asarray(coeffs.eta), np.asarray(coeffs.delta)
    return ScalarField(lambda p: trace_m_power(np.triu(p, 1), t, e, d, k),
                       lambda p: trace_m_power_grad(p, t, e, d, k), name=f"Ik_alpha:k={k}")


def Ik_alpha_nonsingular(coeffs: AlphaCoefficients, rho, k: int) -> float:
    """``tail^k Tr(rho - eta rho^T eta^{-1})^{2k}``, valid when no ``a_i`` vanishes."""
    if not coeffs.is_nonsingular():
        raise ValueError("the reduced form needs a nonsingular sequence")
    e = np.asarray(coeffs.eta)
    rho = np.triu(rho, 1)
    s = rho - (e[:, None] * rho.T) / e[None, :]
    return float(coeffs.alpha_tail ** k * np.trace(np.linalg.matrix_power(s, 2 * k)))


def Ik_alpha_singular(coeffs: AlphaCoefficients, rho, k: int) -> float:
    """``2 (-1)^k Tr(rho eta rho^T delta)^k``, the form for vanishing tail."""
    rho = np.triu(rho, 1)
    q = (rho * coeffs.eta) @ rho.T * coeffs.delta
    return float(2 * (-1) ** k * np.trace(np.linalg.matrix_power(q, k)))


# ---------------------------------------------------------------------------
# six-dimensional polynomial Casimirs


class _Poly:
    """Sparse polynomial in strictly upper matrix entries."""

    def __init__(self, terms):
        # terms: list of (coefficient, ((i, j), ...))
        self.terms = [(float(c), tuple(ix)) for c, ix in terms if c != 0.0]

    def value(self, rho) -> float:
        return float(sum(c * np.prod([rho[p] for p in ix]) for c, ix in self.terms))

    def grad(self, rho) -> np.ndarray:
        g = np.zeros_like(rho, dtype=float)
        for c, ix in self.terms:
            for s, p in enumerate(ix):
                rest = ix[:s] + ix[s + 1:]
                g[p] += c * np.prod([rho[q] for q in rest])
        return g


def _r(code: str):
    return tuple((int(code[s]), int(code[s + 1])) for s in range(0, len(code), 2))


def _am(a, idx: str) -> float:
    # product of a_i over the digit string idx ("" -> 1)
    return float(np.prod([a[int(ch)] for ch in idx])) if idx else 1.0


_I1_ROWS = [
    ("0123", "45"), ("012", "35"), ("0124", "34"), ("01", "25"), ("014", "24"),
    ("0134", "23"), ("0", "15"), ("04", "14"), ("034", "13"), ("0234", "12"),
    ("", "05"), ("4", "04"), ("34", "03"), ("234", "02"), ("1234", "01"),
]

# weight, [(a-monomial, sign, rho pair product)]
_C2_ROWS = [
    ("0112", [("3", 1, "2345"), ("", -1, "2435"), ("", 1, "2534")]),
    ("012", [("3", 1, "1345"), ("", -1, "1435"), ("", 1, "1534")]),
    ("01", [("23", 1, "1245"), ("", -1, "1425"), ("", 1, "1524")]),
    ("12", [("3", 1, "0345"), ("", -1, "0435"), ("", 1, "0534")]),
    ("1", [("23", 1, "0245"), ("", -1, "0425"), ("", 1, "0524")]),
    ("", [("123", 1, "0145"), ("", -1, "0415"), ("", 1, "0514")]),
    ("013", [("2", 1, "1235"), ("", -1, "1325"), ("", 1, "1523")]),
    ("13", [("2", 1, "0235"), ("", -1, "0325"), ("", 1, "0523")]),
    ("3", [("12", 1, "0135"), ("", -1, "0315"), ("", 1, "0513")]),
    ("0134", [("2", 1, "1234"), ("", -1, "1324"), ("", 1, "1423")]),
    ("134", [("2", 1, "0234"), ("", -1, "0324"), ("", 1, "0423")]),
    ("34", [("12", 1, "0134"), ("", -1, "0314"), ("", 1, "0413")]),
    ("23", [("1", 1, "0125"), ("", -1, "0215"), ("", 1, "0512")]),
    ("234", [("1", 1, "0124"), ("", -1, "0214"), ("", 1, "0412")]),
    ("2334", [("1", 1, "0123"), ("", -1, "0213"), ("", 1, "0312")]),
]

_C3_TERMS = [
    ("123", 1, "012345"), ("23", -1, "021345"), ("23", 1, "031245"),
    ("12", -1, "012435"), ("2", 1, "021435"), ("2", -1, "041235"),
    ("12", 1, "012534"), ("2", -1, "021534"), ("2", 1, "051234"),
    ("", -1, "031425"), ("", 1, "041325"), ("", 1, "031524"),
    ("", -1, "051324"), ("", -1, "041523"), ("", 1, "051423"),
]


def _sixdim_a(seq) -> np.ndarray:
    a = np.asarray(as_sequence(seq).a)
    if a.size != 6:
        raise ValueError("six-dimensional Casimirs need N = 6")
    return a


def I1_sixdim(seq) -> ScalarField:
    """Expanded first Casimir in dimension six (uses ``a_0 .. a_4``)."""
    a = _sixdim_a(seq)
    poly = _Poly([(-2.0 * _am(a, w), _r(pq + pq)) for w, pq in _I1_ROWS])
    return ScalarField(lambda p: poly.value(p), lambda p: np.triu(poly.grad(p), 1), name="I1_sixdim")


def _square_sum(weighted):
    # sum_t w_t P_t^2 with analytic gradient
    def value(p):
        return float(sum(w * q.value(p) ** 2 for w, q in weighted))

    def grad(p):
        g = np.zeros_like(p, dtype=float)
        for w, q in weighted:
            g += 2.0 * w * q.value(p) * q.grad(p)
        return np.triu(g, 1)

    return value, grad


def C2_sixdim(seq) -> ScalarField:
    a = _sixdim_a(seq)
    weighted = []
    for w, inner in _C2_ROWS:
        weighted.append((_am(a, w), _Poly([(s * _am(a, m), _r(pq)) for m, s, pq in inner])))
    value, grad = _square_sum(weighted)
    return ScalarField(value, grad, name="C2_sixdim")


def C3_sixdim(seq) -> ScalarField:
    a = _sixdim_a(seq)
    poly = _Poly([(s * _am(a, m), _r(pq)) for m, s, pq in _C3_TERMS])
    value, grad = _square_sum([(1.0, poly)])
    return ScalarField(value, grad, name="C3_sixdim")


# ---------------------------------------------------------------------------
# Magri expansion of the pencil Casimirs


def pencil_m_data(ca: AlphaCoefficients, cb: AlphaCoefficients, eps: float):
    """Diagonal data of the pencil Casimir at parameter ``eps``."""
    tail = (1.0 + eps) * (ca.alpha_tail + eps * cb.alpha_tail)
    eta = np.asarray(ca.eta) + eps * np.asarray(cb.eta)
    delta = np.asarray(ca.delta) + eps * np.asarray(cb.delta)
    return tail, eta, delta


def pencil_casimir(ca, cb, eps: float, k: int) -> ScalarField:
    """``Tr[(1+eps)(A_a + eps A_b) rho^2 - rho eta rho^T delta - ...]^k`` with
    ``eta = eta_a + eps eta_b`` and ``delta = delta_a + eps delta_b``."""
    t, e, d = pencil_m_data(ca, cb, eps)
    return ScalarField(lambda p: trace_m_power(np.triu(p, 1), t, e, d, k),
                       lambda p: trace_m_power_grad(p, t, e, d, k), name=f"pencil:k={k},eps={eps}")


def magri_nodes(k: int) -> np.ndarray:
    return np.arange(-k, k + 1, dtype=float)


def _magri_inverse(k: int) -> np.ndarray:
    nodes = magri_nodes(k)
    v = np.vander(nodes, 2 * k + 1, increasing=True)
    return np.linalg.inv(v)


def _pair(a, b):
    ca = a if isinstance(a, AlphaCoefficients) else build_alpha(a)
    cb = b if isinstance(b, AlphaCoefficients) else build_alpha(b)
    return ca, cb


def magri_coefficients(k: int, a, b, point) -> np.ndarray:
    """Coefficients ``h^k_0 .. h^k_{2k}`` of the degree ``2k`` polynomial
    ``eps -> pencil Casimir``, by interpolation at the nodes ``-k .. k``."""
    ca, cb = _pair(a, b)
    rho = np.triu(np.asarray(point, dtype=float), 1)
    vals = np.array([trace_m_power(rho, *pencil_m_data(ca, cb, e), k) for e in magri_nodes(k)])
    return _magri_inverse(k) @ vals


def magri_field(k: int, n: int, a, b) -> ScalarField:
    """``h^k_n`` as a scalar field with analytic gradient."""
    if not 0 <= n <= 2 * k:
        raise ValueError("need 0 <= n <= 2k")
    ca, cb = _pair(a, b)
    w = _magri_inverse(k)[n]
    data = [pencil_m_data(ca, cb, e) for e in magri_nodes(k)]

    def value(p):
        rho = np.triu(p, 1)
        return float(sum(c * trace_m_power(rho, *d, k) for c, d in zip(w, data)))

    def grad(p):
        return sum(c * trace_m_power_grad(p, *d, k) for c, d in zip(w, data))

    return ScalarField(value, grad, name=f"magri:k={k},n={n}")


def magri_reconstruction_residual(k: int, a, b, point, eps_values) -> float:
    """Largest relative mismatch between ``sum_n h_n eps^n`` and the direct
    pencil Casimir at the given ``eps`` values."""
    ca, cb = _pair(a, b)
    rho = np.triu(np.asarray(point, dtype=float), 1)
    h = magri_coefficients(k, ca, cb, rho)
    worst = 0.0
    for e in eps_values:
        direct = trace_m_power(rho, *pencil_m_data(ca, cb, e), k)
        poly = np.polynomial.polynomial.polyval(e, h)
        worst = max(worst, abs(direct - poly) / (1.0 + abs(direct)))
    return worst


# ---------------------------------------------------------------------------
# block coordinates (a, x, y, delta) of a strictly upper matrix


def block_parts(rho):
    rho = np.asarray(rho)
    return rho[0, 1], rho[0, 2:], rho[1, 2:], np.triu(rho[2:, 2:], 1)


def block_assemble(a, x, y, delta) -> np.ndarray:
    m = len(x)
    rho = np.zeros((m + 2, m + 2))
    rho[0, 1] = a
    rho[0, 2:] = x
    rho[1, 2:] = y
    rho[2:, 2:] = np.triu(delta, 1)
    return rho


def _h_parts(rho):
    a, x, y, d = block_parts(rho)
    return a, x, y, d - d.T


def h_m(m: int) -> ScalarField:
    """The five block functions ``h_1 .. h_5`` of ``(a, z = x + i y, delta)``.

    ``h1 = -2a^2 + Tr D^2``, ``h2 = |z|^2``, ``h3 = Tr D^4 + 2a^4``,
    ``h4 = |z^T z|^2 + |z|^4`` and
    ``h5 = 4a^2|z|^2 - 4ia zbar^T D z - 4 zbar^T D^2 z`` with ``D = delta - delta^T``.
    """
    if m not in (1, 2, 3, 4, 5):
        raise ValueError("m must be in 1..5")

    def value(rho):
        a, x, y, dd = _h_parts(rho)
        if m == 1:
            return float(-2 * a * a + np.trace(dd @ dd))
        if m == 2:
            return float(x @ x + y @ y)
        if m == 3:
            return float(np.trace(np.linalg.matrix_power(dd, 4)) + 2 * a ** 4)
        if m == 4:
            s = x @ x - y @ y
            return float(s * s + 4 * (x @ y) ** 2 + (x @ x + y @ y) ** 2)
        return float(4 * a * a * (x @ x + y @ y) + 8 * a * (x @ dd @ y)
                     + 4 * ((dd @ x) @ (dd @ x) + (dd @ y) @ (dd @ y)))

    def grad(rho):
        a, x, y, dd = _h_parts(rho)
        ga, gx, gy = 0.0, np.zeros_like(x), np.zeros_like(y)
        gd = np.zeros_like(dd)
        if m == 1:
            ga = -4 * a
            gd = -4 * np.triu(rho[2:, 2:], 1)
        elif m == 2:
            gx, gy = 2 * x, 2 * y
        elif m == 3:
            ga = 8 * a ** 3
            gd = -8 * np.linalg.matrix_power(dd, 3)
        elif m == 4:
            s = x @ x - y @ y
            u = x @ x + y @ y
            gx = 4 * s * x + 8 * (x @ y) * y + 4 * u * x
            gy = -4 * s * y + 8 * (x @ y) * x + 4 * u * y
        else:
            u = x @ x + y @ y
            ga = 8 * a * u + 8 * (x @ dd @ y)
            dx, dy = dd @ x, dd @ y
            gx = 8 * a * a * x + 8 * a * dy - 8 * dd @ dx
            gy = 8 * a * a * y - 8 * a * dx - 8 * dd @ dy
            gd = 8 * a * (np.outer(x, y) - np.outer(y, x))
            gd += 8 * (np.outer(dx, x) - np.outer(x, dx) + np.outer(dy, y) - np.outer(y, dy))
        out = block_assemble(ga, gx, gy, np.triu(gd, 1))
        return out

    return ScalarField(value, grad, name=f"h_m:m={m}")


# combination table: h^k_n = sum_m coefficient(b) h_m
def hkn_closed_coefficients(k: int, n: int, b: float) -> np.ndarray:
    """Coefficients of ``h_1 .. h_5`` in the closed combination for ``h^k_n``."""
    table = {
        (1, 0): [1, -2, 0, 0, 0],
        (1, 1): [1 + b, -4, 0, 0, 0],
        (1, 2): [b, -2, 0, 0, 0],
        (2, 0): [0, 0, 1, 1, 1],
        (2, 1): [0, 0, 2 * (1 + b), 4, 3 + b],
        (2, 2): [0, 0, 1 + 4 * b + b * b, 6, 3 * (1 + b)],
        (2, 3): [0, 0, 2 * b * (1 + b), 4, 1 + 3 * b],
        (2, 4): [0, 0, b * b, 1, b],
    }
    if (k, n) not in table:
        raise ValueError("closed combinations exist for k in {1, 2}, n <= 2k")
    return np.array(table[(k, n)], dtype=float)


def hkn_closed(k: int, n: int, b: float) -> ScalarField:
    coef = hkn_closed_coefficients(k, n, b)
    fields = [h_m(m) for m in range(1, 6)]
    used = [(c, f) for c, f in zip(coef, fields) if c != 0.0]
    return ScalarField(lambda p: float(sum(c * f(p) for c, f in used)),
                       lambda p: sum(c * f.gradient(p) for c, f in used), name=f"hkn_closed:k={k},n={n}")


def block_pencil_sequences(n_size: int, b: float):
    """The pencil ``a = (1, ..., 1)`` and ``b`` equal to one except ``b_1 = b``."""
    a = np.ones(n_size)
    bb = np.ones(n_size)
    bb[1] = b
    return a, bb


# ---------------------------------------------------------------------------
# invariant ids


@dataclass(frozen=True)
class InvariantId:
    tag: str
    params: tuple = ()

    _RANGES = {
        "I_l": ("l",), "I_l_alpha": ("l",), "I_l_minus0": ("l",), "Ik_alpha": ("k",),
        "I1_sixdim": (), "C2_sixdim": (), "C3_sixdim": (), "magri": ("k", "n"),
        "h_m": ("m",), "hkn_closed": ("k", "n"),
    }

    @classmethod
    def parse(cls, text: str) -> "InvariantId":
        """Parse ids like ``"Ik_alpha:k=2"`` or ``"magri:k=2,n=3"``."""
        m = re.fullmatch(r"\s*([A-Za-z0-9_]+)\s*(?::\s*(.*))?", text)
        if not m or m.group(1) not in cls._RANGES:
            raise ValueError(f"unknown invariant id {text!r}")
        tag = m.group(1)
        vals = {}
        if m.group(2):
            for part in m.group(2).split(","):
                key, _, val = part.partition("=")
                vals[key.strip()] = int(val)
        need = cls._RANGES[tag]
        if set(vals) != set(need):
            raise ValueError(f"invariant {tag} needs parameters {need}")
        inv = cls(tag, tuple((key, vals[key]) for key in need))
        inv.validate()
        return inv

    def get(self, key):
        return dict(self.params)[key]

    def validate(self):
        p = dict(self.params)
        if self.tag in ("I_l", "I_l_alpha", "I_l_minus0") and p["l"] < 2:
            raise ValueError("need l >= 2")
        if "k" in p and p["k"] < 1:
            raise ValueError("need k >= 1")
        if "n" in p and not 0 <= p["n"] <= 2 * p["k"]:
            raise ValueError("need 0 <= n <= 2k")
        if "m" in p and not 1 <= p["m"] <= 5:
            raise ValueError("need 1 <= m <= 5")

    def __str__(self):
        if not self.params:
            return self.tag
        return self.tag + ":" + ",".join(f"{k}={v}" for k, v in self.params)


def invariant_field(inv, a=None, b=None) -> ScalarField:
    """Scalar field for an invariant id.

    ``a`` is the deformation (sequence or coefficients); ``b`` the second
    pencil sequence for ``magri``.  ``hkn_closed`` reads ``b_1`` from ``b``.
    """
    if isinstance(inv, str):
        inv = InvariantId.parse(inv)
    t = inv.tag
    p = dict(inv.params)
    if t == "I_l":
        return I_l(p["l"])
    if t == "I_l_minus0":
        return I_l_minus0(p["l"])
    if t == "h_m":
        return h_m(p["m"])
    if a is None:
        raise ValueError(f"invariant {inv} needs a deformation sequence")
    ca = a if isinstance(a, AlphaCoefficients) else build_alpha(a)
    if t == "I_l_alpha":
        return I_l_alpha(ca, p["l"])
    if t == "Ik_alpha":
        return Ik_alpha(ca, p["k"])
    if t == "I1_sixdim":
        return I1_sixdim(ca.seq)
    if t == "C2_sixdim":
        return C2_sixdim(ca.seq)
    if t == "C3_sixdim":
        return C3_sixdim(ca.seq)
    if b is None:
        raise ValueError(f"invariant {inv} needs the second pencil sequence")
    cb = b if isinstance(b, AlphaCoefficients) else build_alpha(b)
    if t == "magri":
        return magri_field(p["k"], p["n"], ca, cb)
    if t == "hkn_closed":
        return hkn_closed(p["k"], p["n"], cb.seq.a[1])
    raise ValueError(f"unknown invariant {inv}")


def eval_invariant(inv, a, point, b=None) -> float:
    return invariant_field(inv, a, b)(np.asarray(point, dtype=float))


def involution_residual(f1: ScalarField, f2: ScalarField, kind: BracketKind, point) -> float:
    """``|{F1, F2}_kind(point)|`` using the fields' analytic gradients."""
    point = np.asarray(point, dtype=float)
    mask = coordinate_mask(kind, point.shape)
    return abs(bracket_from_grads(kind, f1.gradient(point, mask), f2.gradient(point, mask), point))


# ---------------------------------------------------------------------------
# coadjoint actions


def coadjoint_action(which: str, g: np.ndarray, point, coeffs: Optional[AlphaCoefficients] = None):
    """``Ad*_{g^{-1}}`` on the chart named by ``which``.

    ``plus_alpha``: ``pi_+(M) - alpha(pi_+(M^T))`` with ``M = g rho g^{-1}``.
    ``alpha`` and ``minus0``: the lower triangular part of ``g iota(rho) g^{-1}``
    with ``iota`` the embedding into ``S_alpha`` or the identity on the lower
    chart respectively.
    """
    g = np.asarray(g, dtype=float)
    if abs(np.linalg.det(g)) < 1e-14:
        raise np.linalg.LinAlgError("group element is singular")
    gi = np.linalg.inv(g)
    point = np.asarray(point, dtype=float)
    if which == "plus_alpha":
        return project_plus_alpha(coeffs, g @ np.triu(point, 1) @ gi)
    if which == "alpha":
        return np.tril(g @ embed_alpha(coeffs, point) @ gi)
    if which == "minus0":
        return np.tril(g @ np.tril(point) @ gi)
    raise ValueError(f"unknown action {which}")


def ad_star(which: str, x: np.ndarray, point, coeffs: Optional[AlphaCoefficients] = None):
    """``-pi([x, iota(rho)])`` with the projector matching ``which``."""
    point = np.asarray(point, dtype=float)
    if which == "plus_alpha":
        r = np.triu(point, 1)
        return -project_plus_alpha(coeffs, x @ r - r @ x)
    if which == "alpha":
        r = embed_alpha(coeffs, point)
        return -np.tril(x @ r - r @ x)
    if which == "minus0":
        r = np.tril(point)
        return -np.tril(x @ r - r @ x)
    raise ValueError(f"unknown action {which}")


def algebra_element(coeffs: AlphaCoefficients, grad_upper: np.ndarray) -> np.ndarray:
    """``(Dh)^T - alpha(Dh)`` for a strictly upper gradient, i.e. ``sum_ij dh_ij e_ij``."""
    up = np.triu(grad_upper, 1)
    return up.T - coeffs.alpha * up


def random_group_element(rng, coeffs: AlphaCoefficients, max_norm: float = 0.5):
    """``exp(x)`` with ``x`` a random combination of ``e_ij`` scaled to
    Frobenius norm ``<= max_norm``."""
    from .core import matrix_exp

    n = coeffs.n_size
    x = algebra_element(coeffs, np.triu(rng.normal(size=(n, n)), 1))
    nx = np.linalg.norm(x)
    if nx > 0:
        x *= rng.uniform(0.05, 1.0) * max_norm / nx
    return matrix_exp(x), x


# ---------------------------------------------------------------------------
# reduced-chart identities


EPS2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def block_c(xi, lam: float, a: float) -> float:
    """``c_k = lam |xi|^2 - i a xibar^T eps xi`` (real)."""
    xi = np.asarray(xi)
    return float(np.real(lam * np.vdot(xi, xi) - 1j * a * (xi.conj() @ EPS2 @ xi)))


def block_d(xi, lam: float, a: float, c_k: Optional[float] = None) -> float:
    """``(a^2/2)|xi^T xi|^2 - (a^2 - lam^2)|xi|^4 / 2 - lam c_k |xi|^2``."""
    xi = np.asarray(xi)
    if c_k is None:
        c_k = block_c(xi, lam, a)
    u = float(np.real(np.vdot(xi, xi)))
    return float(0.5 * a * a * abs(xi @ xi) ** 2 - 0.5 * (a * a - lam * lam) * u * u - lam * c_k * u)


def pairing_identity_residual(xi) -> float:
    """``|xi^T xi|^2 - (xibar^T xi)^2 - (xibar^T eps xi)^2`` for ``xi`` in C^2.

    ``xibar^T eps xi`` is purely imaginary, so its square is real and
    non-positive.
    """
    xi = np.asarray(xi)
    u = np.vdot(xi, xi)
    v = xi.conj() @ EPS2 @ xi
    return float(abs(abs(xi @ xi) ** 2 - (u * u + v * v)))
