"""Linear Poisson brackets on the truncated operator spaces.

Points are numpy arrays in one of the charts below; gradients are arrays of
the same shape holding ``df/dx`` at the coordinate slots and zero elsewhere.

============  =================  ==========================================
kind          point shape        coordinates
============  =================  ==========================================
canonical     (N, N)             every entry
plus_alpha    (N, N)             strictly upper entries
eta           (N, N)             strictly upper entries
pencil        (N, N)             strictly upper entries
minus0        (N, N)             lower entries, diagonal included
s_alpha       (N, N)             same chart as minus0, routed through S_alpha
k_diagonal    (k, N)             ``varrho_l[n]`` for ``n < N - l``
============  =================  ==========================================
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    AlphaCoefficients,
    as_sequence,
    build_alpha,
    project_plus_alpha,
    shift_down,
    shift_up,
    upper_pairs,
)


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """A real function on a chart with an optional analytic gradient.

    Without ``grad`` the gradient is taken by central differences with step
    ``fd_step * (1 + |x_c|)`` in each coordinate ``x_c``.
    """

    def __init__(self, func: Callable, grad: Optional[Callable] = None,
                 fd_step: float = 1e-5, name: str = "", coord=None):
        self.func = func
        self.grad = grad
        self.fd_step = fd_step
        self.name = name
        # index tuple when this field is a single coordinate function
        self.coord = coord

    def __call__(self, point) -> float:
        return self.func(point)

    def gradient(self, point, mask=None) -> np.ndarray:
        point = np.asarray(point)
        if self.grad is not None:
            g = np.asarray(self.grad(point))
        else:
            g = fd_gradient(self.func, point, self.fd_step, mask)
        if mask is not None:
            g = np.where(mask, g, 0.0)
        return g

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        f, g = self, other

        def grad(p, f=f, g=g):
            return f(p) * g.gradient(p) + g(p) * f.gradient(p)

        return ScalarField(lambda p: f(p) * g(p), grad, name=f"({f.name})*({g.name})")

    def __add__(self, other: "ScalarField") -> "ScalarField":
        f, g = self, other
        return ScalarField(lambda p: f(p) + g(p), lambda p: f.gradient(p) + g.gradient(p),
                           name=f"{f.name}+{g.name}")

    def scaled(self, c: float) -> "ScalarField":
        f = self
        return ScalarField(lambda p: c * f(p), lambda p: c * f.gradient(p), name=f"{c}*{f.name}")


def fd_gradient(func, point, step=1e-5, mask=None) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    g = np.zeros_like(point)
    idxs = np.argwhere(mask) if mask is not None else np.ndindex(point.shape)
    for idx in idxs:
        idx = tuple(idx)
        h = step * (1.0 + abs(point[idx]))
        p1 = point.copy()
        p2 = point.copy()
        p1[idx] += h
        p2[idx] -= h
        g[idx] = (func(p1) - func(p2)) / (2 * h)
    return g


def coordinate(*idx) -> ScalarField:
    """Coordinate function ``x -> x[idx]``."""
    idx = tuple(int(v) for v in idx)

    def grad(p, idx=idx):
        g = np.zeros(np.shape(p))
        g[idx] = 1.0
        return g

    return ScalarField(lambda p, idx=idx: float(p[idx]), grad, name=f"x{idx}", coord=idx)


def constant(c: float) -> ScalarField:
    return ScalarField(lambda p: c, lambda p: np.zeros(np.shape(p)), name=str(c))


# ---------------------------------------------------------------------------
# bracket kinds


@dataclass(frozen=True)
class BracketKind:
    tag: str
    alpha: Optional[AlphaCoefficients] = field(default=None, repr=False)
    beta: Optional[AlphaCoefficients] = field(default=None, repr=False)
    eps: float = 0.0
    eta: Optional[np.ndarray] = field(default=None, repr=False)
    k: int = 0

    @staticmethod
    def canonical() -> "BracketKind":
        return BracketKind("canonical")

    @staticmethod
    def plus_alpha(a) -> "BracketKind":
        return BracketKind("plus_alpha", alpha=_coeffs(a))

    @staticmethod
    def minus0() -> "BracketKind":
        return BracketKind("minus0")

    @staticmethod
    def s_alpha(a) -> "BracketKind":
        return BracketKind("s_alpha", alpha=_coeffs(a))

    @staticmethod
    def eta_kind(eta) -> "BracketKind":
        return BracketKind("eta", eta=np.asarray(eta, dtype=float))

    @staticmethod
    def k_diagonal(k: int) -> "BracketKind":
        if k < 1:
            raise ValueError("k must be positive")
        return BracketKind("k_diagonal", k=int(k))

    @staticmethod
    def pencil(a, b, eps: Optional[float] = None, p: Optional[float] = None,
               check: bool = True) -> "BracketKind":
        """``{,}_alpha + eps {,}_beta``; give either ``eps`` or ``p`` (eps = (1-p)/p)."""
        if (eps is None) == (p is None):
            raise ValueError("give exactly one of eps or p")
        if p is not None:
            if not 0 < p <= 1:
                raise ValueError("p must lie in (0, 1]")
            eps = (1.0 - p) / p
        ca, cb = _coeffs(a), _coeffs(b)
        if check and not pencil_classify(ca.seq, cb.seq).passed:
            raise ValueError("sequences do not form a Poisson pencil")
        return BracketKind("pencil", alpha=ca, beta=cb, eps=float(eps))


def _coeffs(a) -> AlphaCoefficients:
    return a if isinstance(a, AlphaCoefficients) else build_alpha(a)


def coordinate_mask(kind: BracketKind, shape) -> np.ndarray:
    if kind.tag == "k_diagonal":
        k, n = shape
        l_idx, n_idx = np.indices(shape)
        return n_idx < n - l_idx
    n = shape[0]
    if kind.tag == "canonical":
        return np.ones(shape, dtype=bool)
    if kind.tag in ("plus_alpha", "eta", "pencil"):
        return np.triu(np.ones(shape, dtype=bool), 1)
    if kind.tag in ("minus0", "s_alpha"):
        return np.tril(np.ones(shape, dtype=bool))
    raise ValueError(f"unknown bracket kind {kind.tag}")


def coordinate_indices(kind: BracketKind, shape) -> list:
    return [tuple(int(v) for v in ix) for ix in np.argwhere(coordinate_mask(kind, shape))]


def _check_point(kind: BracketKind, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.ndim != 2:
        raise ValueError("point must be a 2-d array")
    if kind.tag == "k_diagonal":
        if point.shape[0] != kind.k:
            raise ValueError(f"k_diagonal point needs {kind.k} rows")
        return point
    if point.shape[0] != point.shape[1]:
        raise ValueError("point must be square for this bracket")
    for c in (kind.alpha, kind.beta):
        if c is not None and c.n_size != point.shape[0]:
            raise ValueError("point size does not match the deformation")
    if kind.eta is not None and kind.eta.size != point.shape[0]:
        raise ValueError("point size does not match eta")
    return point


def _grads(kind, f, g, point):
    mask = coordinate_mask(kind, point.shape)
    return f.gradient(point, mask), g.gradient(point, mask)


def _x_alpha(coeffs: AlphaCoefficients, grad: np.ndarray) -> np.ndarray:
    # element of A_alpha paired with a strictly upper gradient
    up = np.triu(grad, 1)
    return up.T - coeffs.alpha * up


def _comm(x, y):
    return x @ y - y @ x


# ---------------------------------------------------------------------------
# brackets, trace route


def bracket_from_grads(kind: BracketKind, df: np.ndarray, dg: np.ndarray, point) -> float:
    point = _check_point(kind, point)
    t = kind.tag
    if t == "canonical":
        return float(np.trace(point @ _comm(df.T, dg.T)))
    if t == "plus_alpha":
        xa, xb = _x_alpha(kind.alpha, df), _x_alpha(kind.alpha, dg)
        return float(np.trace(point @ _comm(xa, xb)))
    if t == "pencil":
        va = np.trace(point @ _comm(_x_alpha(kind.alpha, df), _x_alpha(kind.alpha, dg)))
        vb = np.trace(point @ _comm(_x_alpha(kind.beta, df), _x_alpha(kind.beta, dg)))
        return float(va + kind.eps * vb)
    if t == "eta":
        up_f, up_g = np.triu(df, 1), np.triu(dg, 1)
        xf, xg = up_f.T - up_f, up_g.T - up_g
        e = kind.eta
        return float(np.trace(point @ ((xf * e) @ xg - (xg * e) @ xf)))
    if t == "minus0":
        rl = np.tril(point, -1)
        f0, fm = np.diag(np.diag(df)), np.tril(df, -1)
        g0, gm = np.diag(np.diag(dg)), np.tril(dg, -1)
        inner = _comm(f0, gm) + _comm(fm, g0) + _comm(fm, gm)
        return float(-np.trace(rl.T @ inner))
    if t == "s_alpha":
        rt = _embed(kind.alpha, point)
        return float(np.trace(rt @ _comm(np.tril(df).T, np.tril(dg).T)))
    if t == "k_diagonal":
        return _k_diag_bracket(point, df, dg)
    raise ValueError(f"unknown bracket kind {t}")


def _embed(coeffs, point):
    lo = np.tril(point, -1)
    return np.tril(point) + np.triu(coeffs.alpha * lo.T, 1)


def _k_diag_bracket(rho, df, dg) -> float:
    # sum_l sum_{i<=l} Tr[ varrho_l ( f_i s^i(g_{l-i}) - g_i s^i(f_{l-i}) ) ]
    k = rho.shape[0]
    total = 0.0
    for l in range(k):
        for i in range(l + 1):
            total += np.dot(rho[l], df[i] * shift_down(dg[l - i], i)
                            - dg[i] * shift_down(df[l - i], i))
    return float(total)


def bracket(kind: BracketKind, f: ScalarField, g: ScalarField, point) -> float:
    """Evaluate ``{f, g}_kind`` at ``point`` (trace formulas)."""
    point = _check_point(kind, point)
    df, dg = _grads(kind, f, g, point)
    return bracket_from_grads(kind, df, dg, point)


# ---------------------------------------------------------------------------
# Hamiltonian vector fields, projector route


def vector_field_from_grad(kind: BracketKind, dh: np.ndarray, point) -> np.ndarray:
    point = _check_point(kind, point)
    t = kind.tag
    mask = coordinate_mask(kind, point.shape)
    dh = np.where(mask, dh, 0.0)
    if t == "canonical":
        return _comm(dh.T, point)
    if t == "plus_alpha":
        return project_plus_alpha(kind.alpha, _comm(_x_alpha(kind.alpha, dh), point))
    if t == "pencil":
        va = project_plus_alpha(kind.alpha, _comm(_x_alpha(kind.alpha, dh), point))
        vb = project_plus_alpha(kind.beta, _comm(_x_alpha(kind.beta, dh), point))
        return va + kind.eps * vb
    if t == "eta":
        up = np.triu(dh, 1)
        y = up.T - up
        e = kind.eta
        m = (e[:, None] * y) @ point - (point @ y) * e
        return np.triu(m - m.T, 1)
    if t == "minus0":
        return np.tril(_comm(np.tril(dh).T, np.tril(point)))
    if t == "s_alpha":
        return np.tril(_comm(np.tril(dh).T, _embed(kind.alpha, point)))
    if t == "k_diagonal":
        return np.where(mask, _k_diag_field(point, dh), 0.0)
    raise ValueError(f"unknown bracket kind {t}")


def _k_diag_field(rho, dh):
    # d varrho_j = sum_{l>=j} ( varrho_l s^j(h_{l-j}) - s~^{l-j}(varrho_l h_{l-j}) )
    k = rho.shape[0]
    out = np.zeros_like(rho)
    for j in range(k):
        for l in range(j, k):
            out[j] += rho[l] * shift_down(dh[l - j], j) - shift_up(rho[l] * dh[l - j], l - j)
    return out


def ham_vector_field(kind: BracketKind, h: ScalarField, point) -> np.ndarray:
    """Components ``{x_c, h}_kind`` at every coordinate ``x_c`` of the chart."""
    point = _check_point(kind, point)
    dh = h.gradient(point, coordinate_mask(kind, point.shape))
    return vector_field_from_grad(kind, dh, point)


# ---------------------------------------------------------------------------
# structure constants and Jacobi


def structure_bracket(coeffs: AlphaCoefficients, i: int, j: int, n: int, m: int) -> list:
    """``{rho_ij, rho_nm}_{+,alpha}`` as ``[(coefficient, (p, q)), ...]``.

    Direct transcription of the four-case table for the coordinate functions
    of strictly upper triangular matrices.
    """
    size = coeffs.n_size
    if not (0 <= i < j < size and 0 <= n < m < size):
        raise IndexError("structure_bracket needs i<j, n<m inside the truncation")
    al = coeffs.alpha
    terms = []
    if m == i:
        terms.append((1.0, (n, j)))
    if j == n:
        terms.append((-1.0, (i, m)))
    if j == m:
        if n < i:
            terms.append((-al[i, j], (n, i)))
        elif i < n:
            terms.append((al[n, j], (i, n)))
    if i == n:
        if m < j:
            terms.append((-al[i, m], (m, j)))
        elif j < m:
            terms.append((al[i, j], (j, m)))
    merged = {}
    for c, ix in terms:
        merged[ix] = merged.get(ix, 0.0) + c
    return [(c, ix) for ix, c in merged.items()]


def structure_tensor(kind: BracketKind, shape) -> tuple:
    """Structure constants ``C[a, b, c]`` with ``{x_a, x_b} = sum_c C[a,b,c] x_c``.

    Obtained by evaluating the bracket of coordinate functions at unit points,
    which is exact because every bracket here is linear in the point.
    Returns ``(C, indices)``.
    """
    idx = coordinate_indices(kind, shape)
    nc = len(idx)
    grads = []
    for ix in idx:
        g = np.zeros(shape)
        g[ix] = 1.0
        grads.append(g)
    c = np.zeros((nc, nc, nc))
    for s, ix in enumerate(idx):
        pt = np.zeros(shape)
        pt[ix] = 1.0
        for a in range(nc):
            for b in range(a + 1, nc):
                v = bracket_from_grads(kind, grads[a], grads[b], pt)
                c[a, b, s] = v
                c[b, a, s] = -v
    return c, idx


def jacobi_tensor(kind: BracketKind, shape) -> np.ndarray:
    """``J[a,b,c,:]`` coefficients of the Jacobiator of coordinate triples."""
    c, _ = structure_tensor(kind, shape)
    t1 = np.einsum("abd,dce->abce", c, c)
    return t1 + np.einsum("bcd,dae->abce", c, c) + np.einsum("cad,dbe->abce", c, c)


def jacobi_residual(kind: BracketKind, f: ScalarField, g: ScalarField, h: ScalarField, point) -> float:
    """``{{f,g},h} + {{g,h},f} + {{h,f},g}`` at ``point``.

    Coordinate triples use the structure constants exactly; other fields fall
    back to finite differences of the inner brackets.
    """
    point = _check_point(kind, point)
    if f.coord is not None and g.coord is not None and h.coord is not None:
        c, idx = structure_tensor(kind, point.shape)
        pos = {ix: s for s, ix in enumerate(idx)}
        a, b, e = pos[f.coord], pos[g.coord], pos[h.coord]
        vals = np.array([point[ix] for ix in idx])
        j = c[a, b] @ c[:, e] + c[b, e] @ c[:, a] + c[e, a] @ c[:, b]
        return float(j @ vals)

    def inner(x, y):
        return ScalarField(lambda p: bracket(kind, x, y, p), fd_step=1e-4)

    return float(bracket(kind, inner(f, g), h, point) + bracket(kind, inner(g, h), f, point)
                 + bracket(kind, inner(h, f), g, point))


# ---------------------------------------------------------------------------
# pencils


@dataclass
class PencilClassification:
    passed: bool
    bands: list
    differing: list
    band_indices: list = field(default_factory=list)
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.passed


def a17_witness(a, b) -> Optional[tuple]:
    """Brute-force search for ``(i, j)`` with
    ``(a_i..a_{j-1} - b_i..b_{j-1}) (a_j - b_j) != 0``."""
    a = np.asarray(as_sequence(a).a)
    b = np.asarray(as_sequence(b).a)
    n = a.size
    for j in range(1, n):
        if a[j] == b[j]:
            continue
        for i in range(j):
            if np.prod(a[i:j]) - np.prod(b[i:j]) != 0.0:
                return (i, j)
    return None


def pencil_bands(a, b) -> list:
    """Closed index bands ``I_l + {n_l, m_l}`` cut at the zeros of ``a`` or ``b``."""
    a = np.asarray(as_sequence(a).a)
    b = np.asarray(as_sequence(b).a)
    n = a.size
    cuts = [-1] + [i for i in range(n) if a[i] == 0.0 or b[i] == 0.0] + [n]
    bands = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        band = [i for i in range(max(lo, 0), min(hi, n - 1) + 1)]
        if band:
            bands.append(band)
    return bands


def pencil_classify(a, b) -> PencilClassification:
    """Decide whether ``{,}_{+,alpha}`` and ``{,}_{+,beta}`` form a pencil.

    PASS iff every band carries at most one index where the sequences
    differ.  On FAIL a violating pair ``(i, j)`` is returned as witness.
    """
    sa, sb = as_sequence(a), as_sequence(b)
    if sa.n_size != sb.n_size:
        raise ValueError("sequences must have equal length")
    av, bv = np.asarray(sa.a), np.asarray(sb.a)
    bands = pencil_bands(sa, sb)
    diff = [i for i in range(av.size) if av[i] != bv[i]]
    passed = True
    witness = None
    per_band = []
    for band in bands:
        ks = [i for i in band if av[i] != bv[i]]
        per_band.append(ks[0] if ks else None)
        if len(ks) > 1 and witness is None:
            passed = False
            witness = (ks[0], ks[1])
    return PencilClassification(passed, bands, diff, per_band, witness)


def blended_sequence(a, b, p: float):
    av, bv = np.asarray(as_sequence(a).a), np.asarray(as_sequence(b).a)
    return p * av + (1.0 - p) * bv


def pencil_linearity_residual(a, b, p: float, f: ScalarField, g: ScalarField, point) -> float:
    """``|{f,g}_{p a + (1-p) b} - p {f,g}_a - (1-p) {f,g}_b|``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    ka = BracketKind.plus_alpha(a)
    kb = BracketKind.plus_alpha(b)
    kc = BracketKind.plus_alpha(blended_sequence(a, b, p))
    point = np.asarray(point, dtype=float)
    return abs(bracket(kc, f, g, point) - p * bracket(ka, f, g, point)
               - (1.0 - p) * bracket(kb, f, g, point))


def banded_pairs(a, b) -> list:
    """Pairs ``i<j`` whose index range ``[i, j-1]`` holds no index where
    ``a`` and ``b`` differ; on these coordinates both brackets agree."""
    av, bv = np.asarray(as_sequence(a).a), np.asarray(as_sequence(b).a)
    n = av.size
    diff = av != bv
    return [(i, j) for i, j in upper_pairs(n) if not diff[i:j].any()]


def all_coordinate_triples(kind: BracketKind, shape):
    idx = coordinate_indices(kind, shape)
    return itertools.combinations(idx, 3)


def r_eta(point, eta) -> np.ndarray:
    """``R_eta rho = rho eta``: scales column ``j`` by ``eta_j``."""
    return np.asarray(point, dtype=float) * np.asarray(eta, dtype=float)[None, :]


def pullback_r_eta(f: ScalarField, eta) -> ScalarField:
    """``f o R_eta`` with the chain-rule gradient."""
    eta = np.asarray(eta, dtype=float)

    def grad(p):
        return f.gradient(r_eta(p, eta)) * eta[None, :]

    return ScalarField(lambda p: f(r_eta(p, eta)), grad, name=f"{f.name}oR")
