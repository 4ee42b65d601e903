import numpy as np
import pytest

from hstoda.core import (
    DeformationSequence,
    alpha_apply,
    basis_e,
    build_alpha,
    eta_bracket,
    in_O_eta,
    matrix_exp,
    project_alpha,
    project_plus_alpha,
    random_strictly_upper,
    shift_down,
    shift_up,
    split,
    unit,
    upper_pairs,
)


def test_alpha_all_ones_and_all_zeros():
    ones = build_alpha(np.ones(5))
    assert np.array_equal(ones.alpha, np.triu(np.ones((5, 5))))
    zeros = build_alpha(np.zeros(5))
    assert np.array_equal(zeros.alpha, np.eye(5))


def test_alpha_small_products():
    c = build_alpha([0.5, 1 / 3, 1.0])
    assert c.alpha[0, 2] == pytest.approx(1 / 6, abs=1e-16)
    assert c.eta[0] == pytest.approx(1 / 6, abs=1e-16)
    assert c.delta[2] == pytest.approx(1 / 6, abs=1e-16)
    assert c.alpha_tail == pytest.approx(1 / 6, abs=1e-16)
    out = alpha_apply(c, unit(3, 0, 2))
    assert out[0, 2] == pytest.approx(1 / 6, abs=1e-16)


def test_sequence_rejects_large_entries():
    with pytest.raises(ValueError):
        DeformationSequence([0.5, 1.5, 0.2])


def test_cocycle_and_eta_delta_exact(rng):
    c = build_alpha(rng.uniform(-1, 1, 7))
    n = c.n_size
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                assert c.alpha[i, j] * c.alpha[j, k] == pytest.approx(c.alpha[i, k], rel=1e-15, abs=1e-300)
    dyadic = build_alpha([0.5, -0.25, 1.0, 0.75, -0.5])
    assert np.all(dyadic.eta * dyadic.delta == dyadic.alpha_tail)


def test_alpha_apply_rejects_lower():
    c = build_alpha(np.ones(3))
    with pytest.raises(ValueError):
        alpha_apply(c, unit(3, 2, 0))


def test_alpha_apply_identity_for_ones(rng):
    c = build_alpha(np.ones(4))
    x = random_strictly_upper(rng, 4)
    assert np.array_equal(alpha_apply(c, x), x)


def test_split_cases(rng):
    lo, d, up = split(np.eye(3))
    assert not lo.any() and not up.any() and np.array_equal(d, np.eye(3))
    x = rng.normal(size=(4, 4))
    assert np.array_equal(sum(split(x)), x)
    xp = random_strictly_upper(rng, 4)
    lo, d, up = split(xp + xp.T)
    assert np.array_equal(lo, xp.T) and np.array_equal(up, xp)


def test_projectors_complementary_and_idempotent(rng):
    c = build_alpha(rng.uniform(-1, 1, 5))
    x = rng.normal(size=(5, 5))
    pa, pp = project_alpha(c, x), project_plus_alpha(c, x)
    assert np.allclose(pa + pp, x, atol=1e-15)
    assert np.allclose(project_alpha(c, pa), pa, atol=1e-15)
    assert np.allclose(project_plus_alpha(c, pp), pp, atol=1e-15)
    xp = random_strictly_upper(rng, 5)
    assert not project_alpha(c, xp).any()
    assert np.array_equal(project_plus_alpha(c, xp), xp)
    zero = build_alpha(np.zeros(5))
    assert np.array_equal(project_plus_alpha(zero, x), np.triu(x, 1))


def test_project_plus_alpha_of_basis():
    c = build_alpha([0.5, -0.75, 0.25, 1.0])
    for i, j in upper_pairs(4):
        e = basis_e(c, i, j)
        expected = -2 * c.alpha[i, j] * unit(4, i, j)
        assert np.allclose(project_plus_alpha(c, e), expected, atol=1e-16)
        assert np.allclose(project_alpha(c, e) + project_plus_alpha(c, e), e, atol=1e-16)


def test_basis_examples():
    e = basis_e(build_alpha(np.ones(3)), 0, 1)
    assert np.array_equal(e, -e.T)
    e0 = basis_e(build_alpha(np.zeros(3)), 0, 2)
    assert np.array_equal(e0, unit(3, 2, 0))
    with pytest.raises(IndexError):
        basis_e(build_alpha(np.ones(3)), 2, 1)


def test_eta_bracket_examples(rng):
    x, y = rng.normal(size=(2, 4, 4))
    assert np.allclose(eta_bracket(x, y, np.ones(4)), x @ y - y @ x)
    assert not eta_bracket(x, x, rng.normal(size=4)).any()
    xs, ys = x - x.T, y - y.T
    eta = rng.uniform(0.2, 1.0, 4)
    lhs = eta[:, None] * eta_bracket(xs, ys, eta)
    rhs = eta_bracket(eta[:, None] * xs, eta[:, None] * ys, np.ones(4))
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_in_O_eta_examples(rng):
    x = rng.normal(size=(4, 4))
    assert in_O_eta(x - x.T, np.ones(4))
    assert not in_O_eta(x + x.T, np.ones(4))
    c = build_alpha(rng.uniform(0.2, 1.0, 5))
    for i, j in upper_pairs(5):
        assert in_O_eta(basis_e(c, i, j), c.eta)


def test_shifts():
    d = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(shift_down(d, 0), d)
    assert np.array_equal(shift_down(d, 1), [2.0, 3.0, 0.0])
    assert np.array_equal(shift_up(shift_down(d, 2), 2), [0.0, 0.0, 3.0])


def test_matrix_exp(rng):
    assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))
    x = rng.normal(size=(5, 5))
    x = x / np.linalg.norm(x, 2)
    assert np.allclose(matrix_exp(x) @ matrix_exp(-x), np.eye(5), atol=1e-12)
    n = random_strictly_upper(rng, 3)
    assert np.allclose(matrix_exp(n), np.eye(3) + n + n @ n / 2, atol=1e-15)
