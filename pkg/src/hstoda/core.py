"""Finite-truncation operator algebra.

Everything here works on dense ``N x N`` real numpy arrays.  The deformation
is described by a sequence ``a_0 .. a_{N-1}`` with ``|a_i| <= 1`` and the
coefficient table ``alpha_ij = a_i a_{i+1} ... a_{j-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DeformationSequence:
    """Real sequence ``a_0 .. a_{N-1}`` with sup-norm at most one."""

    a: tuple

    def __init__(self, a: Sequence[float]):
        arr = tuple(float(v) for v in np.asarray(a, dtype=float).ravel())
        if len(arr) < 2:
            raise ValueError("deformation sequence needs N >= 2 entries")
        if not np.all(np.isfinite(arr)):
            raise ValueError("deformation sequence must be finite")
        if max(abs(v) for v in arr) > 1.0:
            raise ValueError("deformation sequence violates |a_i| <= 1")
        object.__setattr__(self, "a", arr)

    @property
    def n_size(self) -> int:
        return len(self.a)

    def as_array(self) -> np.ndarray:
        return np.array(self.a)


@dataclass(frozen=True)
class AlphaCoefficients:
    """Coefficient table and the derived diagonals.

    Attributes
    ----------
    alpha : (N, N) array
        Upper triangular with unit diagonal, zero below the diagonal.
    eta : (N,) array
        ``eta_i = a_i ... a_{N-1}``.
    delta : (N,) array
        ``delta_i = alpha_{0i}``.
    alpha_tail : float
        ``a_0 ... a_{N-1}``, so that ``eta_i delta_i = alpha_tail``.
    """

    seq: DeformationSequence
    alpha: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    alpha_tail: float = 0.0

    @property
    def n_size(self) -> int:
        return self.alpha.shape[0]

    @property
    def upper_mask(self) -> np.ndarray:
        return np.triu(np.ones_like(self.alpha, dtype=bool), 1)

    def is_nonsingular(self) -> bool:
        return self.alpha_tail != 0.0


def as_sequence(a) -> DeformationSequence:
    if isinstance(a, DeformationSequence):
        return a
    if isinstance(a, AlphaCoefficients):
        return a.seq
    return DeformationSequence(a)


def build_alpha(seq) -> AlphaCoefficients:
    """Build ``alpha_ij``, ``eta``, ``delta`` and the tail product.

    Products are formed by direct multiplication (no logs or divisions), so
    the cocycle identity ``alpha_ij alpha_jk = alpha_ik`` holds exactly
    whenever floating point multiplication is associative on the data.
    """
    seq = as_sequence(seq)
    a = seq.as_array()
    n = a.size
    alpha = np.zeros((n, n))
    for i in range(n):
        alpha[i, i] = 1.0
        for j in range(i + 1, n):
            alpha[i, j] = alpha[i, j - 1] * a[j - 1]
    eta = np.empty(n)
    acc = 1.0
    for i in range(n - 1, -1, -1):
        acc = a[i] * acc
        eta[i] = acc
    delta = alpha[0].copy()
    tail = float(alpha[0, n - 1] * a[n - 1])
    for arr in (alpha, eta, delta):
        arr.setflags(write=False)
    return AlphaCoefficients(seq=seq, alpha=alpha, eta=eta, delta=delta, alpha_tail=tail)


def _check_square(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    return x


def is_strictly_upper(x: np.ndarray, tol: float = 0.0) -> bool:
    x = _check_square(x)
    return bool(np.all(np.abs(np.tril(x)) <= tol))


def alpha_apply(coeffs: AlphaCoefficients, x_plus: np.ndarray) -> np.ndarray:
    """Entrywise ``alpha_ij x_ij`` on a strictly upper triangular matrix."""
    x_plus = _check_square(x_plus)
    if x_plus.shape[0] != coeffs.n_size:
        raise ValueError("size mismatch between alpha and operator")
    if not is_strictly_upper(x_plus):
        raise ValueError("alpha_apply needs a strictly upper triangular input")
    return np.triu(coeffs.alpha * x_plus, 1)


def _alpha_of_upper(coeffs: AlphaCoefficients, x: np.ndarray) -> np.ndarray:
    # same as alpha_apply but silently drops the non-upper part
    return np.triu(coeffs.alpha * x, 1)


def split(x: np.ndarray):
    """Return ``(x_-, x_0, x_+)``: strictly lower, diagonal, strictly upper."""
    x = _check_square(x)
    return np.tril(x, -1), np.diag(np.diag(x)), np.triu(x, 1)


def project_alpha(coeffs: AlphaCoefficients, x: np.ndarray) -> np.ndarray:
    """Projection on ``S_alpha``: ``x_- + x_0 + alpha(x_-^T)``."""
    lo, d, _ = split(x)
    return lo + d + _alpha_of_upper(coeffs, lo.T)


def project_plus_alpha(coeffs: AlphaCoefficients, x: np.ndarray) -> np.ndarray:
    """Projection on ``L_+`` along ``S_alpha``: ``x_+ - alpha(x_-^T)``."""
    lo, _, up = split(x)
    return up - _alpha_of_upper(coeffs, lo.T)


def project_minus0(x: np.ndarray) -> np.ndarray:
    """Orthogonal projection on lower triangular (diagonal included)."""
    return np.tril(_check_square(x))


def project_plus(x: np.ndarray) -> np.ndarray:
    return np.triu(_check_square(x), 1)


def embed_alpha(coeffs: AlphaCoefficients, rho_lower: np.ndarray) -> np.ndarray:
    """Embed ``(rho_-, rho_0)`` into ``S_alpha`` as ``rho_- + rho_0 + alpha(rho_-^T)``."""
    return project_alpha(coeffs, np.tril(rho_lower))


def unit(n: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def basis_e(coeffs: AlphaCoefficients, i: int, j: int) -> np.ndarray:
    """``|j><i| - alpha_ij |i><j|`` for ``0 <= i < j < N``."""
    n = coeffs.n_size
    if not (0 <= i < j < n):
        raise IndexError(f"basis index ({i}, {j}) out of range for N={n}")
    e = np.zeros((n, n))
    e[j, i] = 1.0
    e[i, j] = -coeffs.alpha[i, j]
    return e


def basis_commutator_table(coeffs: AlphaCoefficients, i: int, j: int, n: int, m: int) -> list:
    """``[e_ij, e_nm]`` expanded in the ``e`` basis, as ``[(coef, (p, q)), ...]``."""
    al = coeffs.alpha
    out = []
    if m == i:
        out.append((1.0, (n, j)))
    if j == n:
        out.append((-1.0, (i, m)))
    if j == m and n < i:
        out.append((-al[i, j], (n, i)))
    if j == m and i < n:
        out.append((al[n, j], (i, n)))
    if i == n and m < j:
        out.append((-al[i, m], (m, j)))
    if i == n and j < m:
        out.append((al[i, j], (j, m)))
    return out


def expand_in_basis(coeffs: AlphaCoefficients, terms) -> np.ndarray:
    n = coeffs.n_size
    out = np.zeros((n, n))
    for c, (p, q) in terms:
        out = out + c * basis_e(coeffs, p, q)
    return out


def upper_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def eta_bracket(x: np.ndarray, y: np.ndarray, eta) -> np.ndarray:
    """``X eta Y - Y eta X`` with ``eta`` a diagonal given as a vector."""
    eta = np.asarray(eta, dtype=float)
    return (x * eta) @ y - (y * eta) @ x


def in_O_eta(x: np.ndarray, eta, tol: float = 1e-12) -> bool:
    """True iff ``||X eta + eta X^T|| <= tol`` (Frobenius)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    eta = np.asarray(eta, dtype=float)
    r = x * eta + (eta[:, None] * x.T)
    return bool(np.linalg.norm(r) <= tol)


def shift_down(d, i: int) -> np.ndarray:
    """``s^i``: drop the first ``i`` entries, pad the tail with zeros."""
    d = np.asarray(d)
    n = d.size
    if i < 0:
        raise ValueError("shift out of range")
    out = np.zeros_like(d)
    if i < n:
        out[: n - i] = d[i:]
    return out


def shift_up(d, l: int) -> np.ndarray:
    """``s~^l``: prepend ``l`` zeros, drop the tail."""
    d = np.asarray(d)
    n = d.size
    if l < 0:
        raise ValueError("shift out of range")
    out = np.zeros_like(d)
    if l < n:
        out[l:] = d[: n - l]
    return out


def matrix_exp(x: np.ndarray, order: int = 18) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    The argument is scaled by ``2**-s`` until its 1-norm is at most 1/2; the
    Taylor remainder after ``order`` terms is then far below double
    precision, and ``s`` squarings undo the scaling.
    """
    x = np.asarray(_check_square(x), dtype=float)
    n = x.shape[0]
    norm = np.linalg.norm(x, 1)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    xs = x / (2.0 ** s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, order + 1):
        term = term @ xs / k
        result = result + term
        if not term.any():
            break
    for _ in range(s):
        result = result @ result
    return result


def random_strictly_upper(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    return np.triu(rng.normal(scale=scale, size=(n, n)), 1)


def random_sequence(rng: np.random.Generator, n: int, low: float = -1.0, high: float = 1.0,
                    zeros=()) -> DeformationSequence:
    a = rng.uniform(low, high, size=n)
    for z in zeros:
        a[z] = 0.0
    return DeformationSequence(a)


def to_json_matrix(x: np.ndarray) -> list:
    """Row-major nested lists, the serialization used by the CLI."""
    return [[float(v) for v in row] for row in np.asarray(x)]


def alpha_to_json(coeffs: AlphaCoefficients) -> dict:
    return {
        "a": list(coeffs.seq.a),
        "alpha": to_json_matrix(coeffs.alpha),
        "eta": [float(v) for v in coeffs.eta],
        "delta": [float(v) for v in coeffs.delta],
        "alpha_tail": float(coeffs.alpha_tail),
    }
