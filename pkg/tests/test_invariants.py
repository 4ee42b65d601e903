import numpy as np
import pytest

from hstoda.core import build_alpha, matrix_exp, random_strictly_upper
from hstoda.invariants import (
    C2_sixdim,
    C3_sixdim,
    I1_sixdim,
    I_l,
    I_l_alpha,
    Ik_alpha,
    Ik_alpha_nonsingular,
    Ik_alpha_singular,
    InvariantId,
    ad_star,
    algebra_element,
    block_c,
    block_d,
    block_pencil_sequences,
    coadjoint_action,
    eval_invariant,
    hkn_closed,
    involution_residual,
    magri_coefficients,
    magri_field,
    magri_reconstruction_residual,
    pairing_identity_residual,
    random_group_element,
)
from hstoda.poisson import BracketKind, fd_gradient, ham_vector_field


def test_sixdim_first_casimir_example():
    pt = np.zeros((6, 6))
    pt[0, 1] = 1.0
    assert I1_sixdim(np.ones(6))(pt) == pytest.approx(-2.0, abs=1e-15)


def test_zero_point():
    assert I_l(3)(np.zeros((4, 4))) == 0.0
    c = build_alpha(np.full(5, 0.5))
    assert Ik_alpha(c, 2)(np.zeros((5, 5))) == 0.0
    assert not magri_coefficients(2, np.ones(5), np.full(5, 0.5), np.zeros((5, 5))).any()


@pytest.mark.parametrize("k", [1, 2])
def test_reduced_forms(rng, k):
    pt = random_strictly_upper(rng, 5)
    c = build_alpha(rng.uniform(0.3, 1.0, 5) * rng.choice([-1, 1], 5))
    val = Ik_alpha(c, k)(pt)
    assert val == pytest.approx(Ik_alpha_nonsingular(c, pt, k), rel=1e-10, abs=1e-10)
    a = rng.uniform(-1, 1, 5)
    a[3] = 0.0
    cs = build_alpha(a)
    assert Ik_alpha(cs, k)(pt) == pytest.approx(Ik_alpha_singular(cs, pt, k), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("field", ["Ik1", "Ik2", "C2", "C3"])
def test_casimir_field_vanishes(rng, field):
    a = rng.uniform(-1, 1, 6)
    a[1] = 0.0
    c = build_alpha(a)
    f = {"Ik1": Ik_alpha(c, 1), "Ik2": Ik_alpha(c, 2), "C2": C2_sixdim(c.seq), "C3": C3_sixdim(c.seq)}[field]
    pt = random_strictly_upper(rng, 6)
    assert np.abs(ham_vector_field(BracketKind.plus_alpha(c), f, pt)).max() <= 1e-9


def test_analytic_gradients_match_fd(rng):
    c = build_alpha(rng.uniform(-1, 1, 6))
    pt = random_strictly_upper(rng, 6, 0.5)
    mask = np.triu(np.ones((6, 6), dtype=bool), 1)
    for f in (Ik_alpha(c, 2), C2_sixdim(c.seq), C3_sixdim(c.seq), I1_sixdim(c.seq)):
        g = f.gradient(pt, mask)
        assert np.allclose(g, fd_gradient(f, pt, mask=mask), rtol=1e-6, atol=1e-7)
    lower = np.tril(rng.normal(size=(5, 5)))
    f = I_l_alpha(build_alpha(rng.uniform(-1, 1, 5)), 3)
    assert np.allclose(f.gradient(lower), fd_gradient(f, lower, mask=np.tril(np.ones((5, 5), dtype=bool))),
                       rtol=1e-6, atol=1e-7)


def test_magri_matches_closed_combinations(rng):
    b = 0.37
    a_seq, b_seq = block_pencil_sequences(6, b)
    pt = random_strictly_upper(rng, 6, 0.7)
    for k in (1, 2):
        coef = magri_coefficients(k, a_seq, b_seq, pt)
        for n in range(2 * k + 1):
            ref = hkn_closed(k, n, b)(pt)
            assert coef[n] == pytest.approx(ref, rel=1e-9, abs=1e-9)
    assert magri_reconstruction_residual(2, a_seq, b_seq, pt, rng.uniform(-2, 2, 10)) <= 1e-9


def test_magri_involution(rng):
    a_seq, b_seq = block_pencil_sequences(6, 0.6)
    pt = random_strictly_upper(rng, 6, 0.7)
    f1, f2 = magri_field(1, 0, a_seq, b_seq), magri_field(2, 3, a_seq, b_seq)
    for seq in (a_seq, b_seq):
        assert involution_residual(f1, f2, BracketKind.plus_alpha(seq), pt) <= 1e-9
    assert involution_residual(f1, f1, BracketKind.plus_alpha(a_seq), pt) == pytest.approx(0.0, abs=1e-12)


def test_lower_chart_involution(rng):
    c = build_alpha(rng.uniform(-1, 1, 5))
    pt = np.tril(rng.normal(size=(5, 5)))
    kind = BracketKind.s_alpha(c)
    assert involution_residual(I_l_alpha(c, 2), I_l_alpha(c, 3), kind, pt) <= 1e-9


def test_coadjoint_identity_and_invariance(rng):
    c = build_alpha(rng.uniform(-1, 1, 5))
    pt = random_strictly_upper(rng, 5)
    assert np.allclose(coadjoint_action("plus_alpha", np.eye(5), pt, c), pt)
    g, _ = random_group_element(rng, c, 0.5)
    moved = coadjoint_action("plus_alpha", g, pt, c)
    for k in (1, 2):
        f = Ik_alpha(c, k)
        assert f(moved) == pytest.approx(f(pt), rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("which", ["plus_alpha", "alpha", "minus0"])
def test_coadjoint_derivative(rng, which):
    c = build_alpha(rng.uniform(-1, 1, 4))
    if which == "plus_alpha":
        pt = random_strictly_upper(rng, 4)
        x = algebra_element(c, random_strictly_upper(rng, 4))
    else:
        pt = np.tril(rng.normal(size=(4, 4)))
        x = np.triu(rng.normal(size=(4, 4)))
    h = 1e-5
    fd = (coadjoint_action(which, matrix_exp(h * x), pt, c)
          - coadjoint_action(which, matrix_exp(-h * x), pt, c)) / (2 * h)
    assert np.allclose(fd, -ad_star(which, x, pt, c), atol=1e-6)
    assert not ad_star(which, np.zeros((4, 4)), pt, c).any()


def test_ham_field_is_coadjoint_generator(rng):
    c = build_alpha(rng.uniform(-1, 1, 5))
    pt = random_strictly_upper(rng, 5)
    h = Ik_alpha(build_alpha(rng.uniform(-1, 1, 5)), 1)
    dh = h.gradient(pt, np.triu(np.ones((5, 5), dtype=bool), 1))
    v = ham_vector_field(BracketKind.plus_alpha(c), h, pt)
    assert np.allclose(v, -ad_star("plus_alpha", algebra_element(c, dh), pt, c), atol=1e-12)


def test_group_preserves_eta(rng):
    c = build_alpha(rng.uniform(0.3, 1.0, 5))
    g, _ = random_group_element(rng, c, 0.5)
    eta = np.diag(c.eta)
    assert np.allclose(g @ eta @ g.T, eta, atol=1e-10)


def test_pairing_identity(rng):
    for _ in range(20):
        xi = rng.normal(size=2) + 1j * rng.normal(size=2)
        assert pairing_identity_residual(xi) <= 1e-12


def test_d_is_minus_half_c_squared(rng):
    for _ in range(20):
        xi = rng.normal(size=2) + 1j * rng.normal(size=2)
        lam, a = rng.uniform(0, 2), rng.uniform(-1, 1)
        assert block_d(xi, lam, a) == pytest.approx(-0.5 * block_c(xi, lam, a) ** 2, abs=1e-12)


def test_invariant_ids():
    inv = InvariantId.parse("Ik_alpha:k=2")
    assert str(inv) == "Ik_alpha:k=2" and inv.get("k") == 2
    assert str(InvariantId.parse("magri: k=2, n=3")) == "magri:k=2,n=3"
    for bad in ("nope", "Ik_alpha", "Ik_alpha:k=0", "magri:k=1,n=3", "h_m:m=6", "I_l:l=1"):
        with pytest.raises(ValueError):
            InvariantId.parse(bad)
    with pytest.raises(ValueError):
        eval_invariant("Ik_alpha:k=1", None, np.zeros((3, 3)))
    assert eval_invariant("I_l:l=2", None, np.eye(3)) == pytest.approx(1.5)
