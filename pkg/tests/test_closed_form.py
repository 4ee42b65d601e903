import numpy as np
import pytest

from hstoda.closed_form import (
    DegenerateModulus,
    PreconditionError,
    QuarticData,
    compare,
    n2_invariant_checks,
    quartic_w4,
    quartic_w4_four_term,
    solve_n2,
    solve_n34,
)
from hstoda.dynamics import (
    ComplexState,
    IntegratorConfig,
    ReducedState,
    cubic_flow,
    polar_angles,
    reduced_etas,
    skew_normal_form,
    to_reduced,
    to_rotated,
)
from hstoda.verify import random_complex_state


def _cfg(t_end, n):
    return IntegratorConfig(method="DOP853", rtol=1e-12, atol=1e-14, t_span=(0.0, t_end), n_samples=n)


def _rotated_along(st, states):
    red0 = to_reduced(st.z, st.delta)
    c2 = float(np.real(np.vdot(st.z, st.z)))
    m = len(red0.lambdas)
    out = []
    for z in states:
        w = red0.O @ z
        red = ReducedState(w[: 2 * m].reshape(m, 2), w[2 * m] if red0.odd else None, red0.lambdas, red0.O)
        out.append(to_rotated(red, st.a, c2)[0])
    return out


def test_n2_matches_flow(rng):
    for _ in range(5):
        st = random_complex_state(rng, 2, 0.6)
        sol = solve_n2(st)
        tr = cubic_flow(st.z, st.a, st.delta, _cfg(5.0, 201))
        assert compare(sol(tr.t), tr.states).max_error <= 1e-6


def test_n2_frequency_is_phase_rate_of_eta(rng):
    st = random_complex_state(rng, 2, 0.6)
    sol = solve_n2(st)
    c2 = float(np.real(np.vdot(st.z, st.z)))
    assert sol.omega1 == pytest.approx(-4 * st.a * (1 + c2) + 4 * sol.r1)
    tr = cubic_flow(st.z, st.a, st.delta, _cfg(0.5, 2))
    eta = [reduced_etas(to_reduced(z, st.delta))[0] for z in tr.states]
    assert np.angle(eta[1] / eta[0]) == pytest.approx(sol.omega1 * 0.5, abs=1e-8)


def test_n2_quadrature_route_matches_closed(rng):
    st = random_complex_state(rng, 2, 0.6)
    ts = np.linspace(0.0, 2.0, 9)
    closed = solve_n2(st)
    quad = solve_n2(st, force_quadrature=True)
    assert quad.method == "quadrature"
    assert np.abs(closed(ts) - quad(ts)).max() <= 1e-8


def test_n2_invariant_checks(rng):
    st = random_complex_state(rng, 2, 0.6)
    rep = n2_invariant_checks(solve_n2(st), np.linspace(0.0, 5.0, 100))
    assert rep.max_norm_residual <= 1e-8 and rep.max_area_residual <= 1e-8


def _zero_pairing_state(lam=0.8, a=0.35, s=0.5):
    # xi = s (1, i) has xi^T xi = 0
    d = np.array([[0.0, lam], [0.0, 0.0]])
    o, _ = skew_normal_form(d)
    xi = s * np.array([1.0, 1j])
    return ComplexState(o.T @ xi, a, d)


def test_n2_vanishing_pairing_rate():
    st = _zero_pairing_state()
    sol = solve_n2(st)
    assert sol.rho == pytest.approx(0.0, abs=1e-15)
    tr = cubic_flow(st.z, st.a, st.delta, _cfg(5.0, 51))
    assert compare(sol(tr.t), tr.states).max_error <= 1e-8
    # the angle rate along the flow
    al0, _ = polar_angles(sol.O @ tr.states[0])
    al1, _ = polar_angles(sol.O @ tr.states[1])
    rate = np.angle(np.exp(1j * (al1 - al0))) / tr.t[1]
    assert rate == pytest.approx(sol.slope + 2 * sol.quotient / sol.c2, abs=1e-8)
    # the slope alone misses the quotient term, which stays finite here
    assert abs(rate - sol.slope) > 1e-3


def test_n2_degenerate_modulus():
    d = np.array([[0.0, 0.6], [0.0, 0.0]])
    z = np.exp(0.3j) * np.array([0.4, -0.7])
    with pytest.raises(DegenerateModulus):
        solve_n2(ComplexState(z, 0.5, d))


def test_n2_rejects_wrong_size(rng):
    with pytest.raises(PreconditionError):
        solve_n2(random_complex_state(rng, 3))


def _data(rng):
    return QuarticData(0.9, 0.4, 0.7, 0.8, rng.normal(), rng.normal(), rng.normal())


def test_quartic_has_no_constant_term(rng):
    d = _data(rng)
    assert quartic_w4(0.0, d) == 0.0
    assert quartic_w4_four_term(0.0, d) == 0.0


@pytest.mark.parametrize("n", [3, 4])
def test_quartic_integral_along_flow(rng, n):
    for _ in range(20):
        st = random_complex_state(rng, n, 0.5)
        try:
            sol = solve_n34(st)
        except (ValueError, ArithmeticError):
            continue
        break
    tr = cubic_flow(st.z, st.a, st.delta, _cfg(3.0, 31))
    i1 = 1 if sol.odd else 0
    res, res_four = [], []
    for rot in _rotated_along(st, tr.states):
        p1, r1 = rot.p[i1], rot.r[i1]
        res.append(sol.data.e + quartic_w4(r1, sol.data) - p1 * p1)
        res_four.append(quartic_w4_four_term(r1, sol.data) - p1 * p1)
    assert np.abs(res).max() <= 1e-8
    # the four-term quartic is not an integral of the motion
    assert np.ptp(res_four) > 1e-4


def test_quartic_against_its_definition(rng):
    d = _data(rng)
    for r in rng.normal(size=5):
        direct = (r * r - d.c1 ** 2) / d.k1 - d.q1(r) ** 2
        const = -d.c1 ** 2 / d.k1 - d.q1(0.0) ** 2
        assert quartic_w4(r, d) == pytest.approx(direct - const, rel=1e-12, abs=1e-12)


def test_four_term_quartic_coefficients_differ(rng):
    d = _data(rng)
    rs = np.linspace(-2, 2, 9)
    fit = np.polyfit(rs, quartic_w4_four_term(rs, d), 4)
    ours = d.coefficients()
    assert fit[3] == pytest.approx(ours[3], rel=1e-8)
    for i in (0, 1, 2):
        assert abs(fit[i] - ours[i]) > 1e-6 * max(1.0, abs(ours[i]))


def test_n34_equal_lambdas_rejected(rng):
    d = np.zeros((4, 4))
    d[0, 1] = d[2, 3] = 0.5
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    with pytest.raises(PreconditionError):
        solve_n34(ComplexState(z * 0.4, 0.9, d))


def _turning_solution(rng, n, t_end):
    for _ in range(60):
        st = random_complex_state(rng, n, 0.5)
        try:
            sol = solve_n34(st)
        except (ValueError, ArithmeticError):
            continue
        if not sol.stationary and sol.period < t_end:
            return st, sol
    pytest.fail("no admissible initial data with a turning point")


@pytest.mark.parametrize("n", [3, 4])
def test_n34_pipeline_matches_flow(rng, n):
    st, sol = _turning_solution(rng, n, 3.0)
    tr = cubic_flow(st.z, st.a, st.delta, _cfg(3.0, 61))
    rots = _rotated_along(st, tr.states)
    i1 = 1 if sol.odd else 0
    p1 = np.array([r.p[i1] for r in rots])
    assert np.any(np.diff(np.sign(p1)) != 0)
    assert compare(sol(tr.t), tr.states).max_error <= 1e-5
    for t, rot in zip(tr.t, rots):
        q, p, r = sol.rotated(t)
        assert np.allclose(q, rot.q, atol=1e-7) and np.allclose(p, rot.p, atol=1e-7)
        assert np.allclose(r, rot.r, atol=1e-7)


def test_n34_r1_obeys_its_equation(rng):
    st, sol = _turning_solution(rng, 4, 3.0)
    d = sol.data
    h = 1e-5
    for t in np.linspace(0.1, 2.9, 15):
        r_plus, _ = sol.r1_p1(t + h)
        r_minus, _ = sol.r1_p1(t - h)
        _, p1 = sol.r1_p1(t)
        assert (r_plus - r_minus) / (2 * h) == pytest.approx(4 * d.rho * d.k1 * p1, abs=1e-7)
        r1, _ = sol.r1_p1(t)
        assert p1 * p1 == pytest.approx(d.e + quartic_w4(r1, d), abs=1e-9)


def test_n34_rejects_wrong_size(rng):
    with pytest.raises(PreconditionError):
        solve_n34(random_complex_state(rng, 2))
