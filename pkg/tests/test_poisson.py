import numpy as np
import pytest

from hstoda.core import build_alpha, random_strictly_upper, upper_pairs
from hstoda.invariants import h_m
from hstoda.poisson import (
    BracketKind,
    ScalarField,
    a17_witness,
    banded_pairs,
    bracket,
    coordinate,
    constant,
    fd_gradient,
    ham_vector_field,
    jacobi_residual,
    pencil_classify,
    pencil_linearity_residual,
    pullback_r_eta,
    r_eta,
    structure_bracket,
)


def _poly_field(rng, n):
    # cubic polynomial in a few coordinates, with analytic gradient
    idx = [tuple(p) for p in rng.permutation(upper_pairs(n))[:3]]
    c = rng.normal(size=3)
    f = coordinate(*idx[0]).scaled(c[0]) + coordinate(*idx[1]) * coordinate(*idx[2]).scaled(c[1])
    return f + coordinate(*idx[0]) * coordinate(*idx[1]) * coordinate(*idx[2]).scaled(c[2])


def test_structure_bracket_examples():
    c = build_alpha([0.5, -0.75, 0.25, 1.0])
    assert structure_bracket(c, 0, 1, 1, 2) == [(-1.0, (0, 2))]
    assert structure_bracket(c, 0, 2, 1, 2) == [(c.alpha[1, 2], (0, 1))]
    assert structure_bracket(c, 1, 3, 1, 3) == []


def test_bracket_matches_structure_constants(rng):
    a = rng.uniform(-1, 1, 5)
    c = build_alpha(a)
    kind = BracketKind.plus_alpha(c)
    pt = random_strictly_upper(rng, 5)
    for i, j in upper_pairs(5):
        for n, m in upper_pairs(5):
            val = bracket(kind, coordinate(i, j), coordinate(n, m), pt)
            expect = sum(cf * pt[ix] for cf, ix in structure_bracket(c, i, j, n, m))
            assert val == pytest.approx(expect, abs=1e-13)


def test_ham_vector_field_components(rng):
    kind = BracketKind.plus_alpha(rng.uniform(-1, 1, 5))
    pt = random_strictly_upper(rng, 5)
    h = h_m(2) + coordinate(0, 3) * coordinate(1, 2)
    v = ham_vector_field(kind, h, pt)
    for i, j in upper_pairs(5):
        assert v[i, j] == pytest.approx(bracket(kind, coordinate(i, j), h, pt), abs=1e-12)
    assert not ham_vector_field(kind, constant(3.0), pt).any()


def test_antisymmetry_and_leibniz(rng):
    n = 5
    kinds = [BracketKind.plus_alpha(rng.uniform(-1, 1, n)),
             BracketKind.eta_kind(rng.uniform(0.3, 1, n))]
    pt = random_strictly_upper(rng, n)
    for kind in kinds:
        f, g, h = (_poly_field(rng, n) for _ in range(3))
        assert bracket(kind, f, g, pt) == pytest.approx(-bracket(kind, g, f, pt), abs=1e-12)
        assert bracket(kind, f, f, pt) == pytest.approx(0.0, abs=1e-12)
        lhs = bracket(kind, f * g, h, pt)
        rhs = f(pt) * bracket(kind, g, h, pt) + g(pt) * bracket(kind, f, h, pt)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_jacobi_on_polynomials(rng):
    kind = BracketKind.plus_alpha(rng.uniform(-1, 1, 5))
    pt = random_strictly_upper(rng, 5)
    f, g, h = (_poly_field(rng, 5) for _ in range(3))
    assert jacobi_residual(kind, f, g, h, pt) <= 1e-6
    assert jacobi_residual(kind, f, f, h, pt) <= 1e-6


def test_r_eta_pushforward(rng):
    n = 5
    a = rng.uniform(0.3, 1.0, n)
    c = build_alpha(a)
    pt = random_strictly_upper(rng, n)
    f, g = _poly_field(rng, n), _poly_field(rng, n)
    lhs = bracket(BracketKind.plus_alpha(c), pullback_r_eta(f, c.eta), pullback_r_eta(g, c.eta), pt)
    rhs = bracket(BracketKind.eta_kind(c.eta), f, g, r_eta(pt, c.eta))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_minus0_independent_of_sequence(rng):
    # the trace route through the alpha embedding must not see alpha
    n = 4
    pt = np.tril(rng.normal(size=(n, n)))
    f = ScalarField(lambda p: float(np.sum(np.tril(p) ** 3)), lambda p: 3 * np.tril(p) ** 2)
    g = coordinate(2, 0) * coordinate(3, 3) + coordinate(1, 1) * coordinate(3, 1)
    ref = bracket(BracketKind.minus0(), f, g, pt)
    for _ in range(5):
        kind = BracketKind.s_alpha(rng.uniform(-1, 1, n))
        assert bracket(kind, f, g, pt) == pytest.approx(ref, abs=1e-12)


def test_pencil_classify_examples():
    ones = np.ones(6)
    assert pencil_classify(ones, ones).passed
    b = ones.copy()
    b[1] = 0.4
    res = pencil_classify(ones, b)
    assert res.passed and res.differing == [1]
    b[2] = 0.7
    res = pencil_classify(ones, b)
    assert not res.passed and res.witness == (1, 2)
    assert a17_witness(ones, b) is not None


def test_pencil_linearity(rng):
    n = 5
    a = np.ones(n)
    b = a.copy()
    b[1] = 0.3
    pt = random_strictly_upper(rng, n)
    f, g = _poly_field(rng, n), _poly_field(rng, n)
    assert pencil_linearity_residual(a, b, 1.0, f, g, pt) == 0.0
    assert pencil_linearity_residual(a, b, 0.37, f, g, pt) <= 1e-12
    bad = b.copy()
    bad[2] = 0.6
    worst = max(pencil_linearity_residual(a, bad, 0.37, coordinate(i, j), coordinate(k, m), pt)
                for i, j in upper_pairs(n) for k, m in upper_pairs(n))
    assert worst > 1e-6


def test_pencil_kind_rejects_failing_pair():
    a = np.ones(4)
    b = np.array([1.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        BracketKind.pencil(a, b, eps=0.5)


def test_banded_pairs_agree(rng):
    n = 6
    a = np.ones(n)
    b = a.copy()
    b[2] = 0.2
    pt = random_strictly_upper(rng, n)
    h = h_m(2) * h_m(1) + _poly_field(rng, n)
    ka, kb = BracketKind.plus_alpha(a), BracketKind.plus_alpha(b)
    for i, j in banded_pairs(a, b):
        assert bracket(ka, coordinate(i, j), h, pt) == pytest.approx(
            bracket(kb, coordinate(i, j), h, pt), abs=1e-12)


def test_gradient_matches_fd(rng):
    pt = random_strictly_upper(rng, 5)
    f = _poly_field(rng, 5)
    assert np.allclose(f.gradient(pt), fd_gradient(f, pt), rtol=1e-6, atol=1e-8)
