import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from mv_reinsure.equilibrium import (
    equilibrium_deductible,
    equilibrium_investment,
    equilibrium_retention,
    exponential_utility_strategy,
    value_intercept_integrand,
)
from mv_reinsure.generator import (
    SeparableFn,
    UnsupportedFunction,
    apply_generator,
    ehjb_full,
    ehjb_objective,
    equilibrium_separable,
    verify_ehjb,
)
from mv_reinsure.model import (
    ClaimMeasure,
    ExcessLoss,
    Exponential,
    Full,
    LoadingWarning,
    Proportional,
    constant,
)


def _zero(p):
    return SeparableFn(lambda t: 0.0, lambda t: 0.0, p)


def test_trivial_inputs(ex2):
    with pytest.warns(LoadingWarning):
        p = ex2.params.replace(theta=ex2.params.eta)
    cm = ClaimMeasure(0.0, Exponential(0.5))
    none = Proportional(constant(0.0))
    # phi_t = -r x e and the r x phi_x drift cancel exactly only at x = 0
    assert apply_generator(_zero(p), none, 0.0, 0.0, 1.0, cm, p) == 0.0
    e = math.exp(p.r * (p.T - 1.0))
    assert apply_generator(_zero(p), none, 1.0, 0.0, 1.0, cm, p) == pytest.approx((p.mu - p.r) * e)
    assert apply_generator(_zero(p), none, 1.0, 4.0, 1.0, cm, p) == pytest.approx((p.mu - p.r) * e)


def test_rejects_plain_callables(ex2):
    with pytest.raises(UnsupportedFunction):
        apply_generator(lambda x, t: x, Full(), 0.0, 0.0, 0.0, ex2.measure, ex2.params)


def test_generator_kills_g(ex1):
    p, cm = ex1.params, ex1.measure
    _, g = equilibrium_separable(p, cm)
    ret = equilibrium_retention(p)
    for t in (0.0, 2.25, 4.5, 6.75, 9.0):
        for x in (-5.0, 0.0, 5.0):
            assert abs(apply_generator(g, ret, float(equilibrium_investment(t, p)), x, t, cm, p)) < 1e-8


def test_intercept_derivatives_are_consistent(ex1):
    V, g = equilibrium_separable(ex1.params, ex1.measure)
    for t in (0.5, 4.0, 8.5):
        assert V.check_consistency(t) and g.check_consistency(t)
    wrong = SeparableFn(V.intercept, lambda t: 0.0, ex1.params)
    assert not wrong.check_consistency(4.0)


def _jump_by_quadrature(phi, ell, x, t, lam, kappa):
    pdf = stats.expon(scale=1 / kappa).pdf
    f = lambda z: (phi(x - ell(z), t) - phi(x, t)) * pdf(z)
    return lam * integrate.quad(f, 0, np.inf, epsabs=1e-13, limit=200)[0]


@pytest.mark.parametrize("t,x,pi", [(0.0, 0.0, 0.3), (4.0, -3.0, -1.0), (8.0, 2.5, 1.7)])
def test_generic_operator_by_direct_integration(ex1, t, x, pi):
    # every term written out, the jump part integrated over claim sizes by scipy
    p, cm = ex1.params, ex1.measure
    V, _ = equilibrium_separable(p, cm)
    m = 0.7
    ell = lambda z: min(z, m)
    e = math.exp(p.r * (p.T - t))
    l1 = integrate.quad(lambda z: ell(z) * stats.expon(scale=2).pdf(z), 0, np.inf, limit=200)[0]
    drift = p.r * x + (p.mu - p.r) * pi + (p.theta - p.eta) * 2.0 + (1 + p.eta) * l1
    phi_t = V.intercept_derivative(t) - p.r * e * x
    expected = phi_t + drift * e + _jump_by_quadrature(V, ell, x, t, 1.0, 0.5)
    got = apply_generator(V, ExcessLoss(constant(m)), pi, x, t, cm, p)
    assert got == pytest.approx(expected, abs=1e-9)


def test_ehjb1_vanishes_at_equilibrium(ex1):
    p, cm = ex1.params, ex1.measure
    ret = equilibrium_retention(p)
    V, g = equilibrium_separable(p, cm)
    for t in np.linspace(0, 9, 7):
        pi = float(equilibrium_investment(t, p))
        B_prime = -value_intercept_integrand(t, p, cm, ret)
        assert abs(ehjb_objective(ret, pi, t, B_prime, cm, p)) < 1e-12
        assert abs(ehjb_full(V, g, ret, pi, 3.0, t, cm, p)) < 1e-9


@pytest.mark.parametrize("t", [0.0, 1.0, 2.9])
def test_investment_gap_is_quadratic(ex2, t):
    p, cm = ex2.params, ex2.measure
    ret = equilibrium_retention(p)
    pi = float(equilibrium_investment(t, p))
    delta = 0.1
    base = ehjb_objective(ret, pi, t, 0.0, cm, p)
    bumped = ehjb_objective(ret, pi + delta, t, 0.0, cm, p)
    gap = 0.5 * p.gamma * math.exp(2 * p.r * (p.T - t)) * p.sigma2**2 * delta**2
    assert bumped < base
    assert base - bumped == pytest.approx(gap, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0, 9), h=st.floats(0.01, 2.0))
def test_second_difference_in_investment(ex1, t, h):
    p, cm = ex1.params, ex1.measure
    ret = equilibrium_retention(p)
    pi = float(equilibrium_investment(t, p))
    f = lambda q: ehjb_objective(ret, q, t, 0.0, cm, p)
    second = f(pi + h) + f(pi - h) - 2 * f(pi)
    expected = -p.gamma * math.exp(2 * p.r * (p.T - t)) * p.sigma2**2 * h * h
    assert second == pytest.approx(expected, rel=1e-7, abs=1e-12)
    # first-order condition: symmetric around pi*
    assert f(pi + h) == pytest.approx(f(pi - h), rel=1e-9, abs=1e-12)


def test_full_retention_is_worse(ex2):
    p, cm = ex2.params, ex2.measure
    pi = float(equilibrium_investment(0.0, p))
    star = ehjb_objective(equilibrium_retention(p), pi, 0.0, 0.0, cm, p)
    assert ehjb_objective(Proportional(constant(1.0)), pi, 0.0, 0.0, cm, p) < star
    assert ehjb_objective(Full(), pi, 0.0, 0.0, cm, p) < star


def test_exponential_utility_deductible_is_worse(ex1):
    p, cm = ex1.params, ex1.measure
    for t in (0.0, 4.5, 9.0):
        pi = float(equilibrium_investment(t, p))
        mu_ = float(exponential_utility_strategy(t, p)[0])
        star = ehjb_objective(equilibrium_retention(p), pi, t, 0.0, cm, p)
        assert ehjb_objective(ExcessLoss(constant(mu_)), pi, t, 0.0, cm, p) < star


def test_verify_certifies_example1(ex1):
    grid = [(x, t) for x in (-5.0, 0.0, 5.0) for t in (0.0, 4.5, 9.0)]
    report = verify_ehjb(grid, ex1.params, ex1.measure)
    assert report.passed, report.to_json()
    for pt in report.points:
        assert pt.ehjb1_residual < 1e-7 and pt.supremum_gap <= 1e-9
        if pt.t == 9.0:
            assert pt.terminal_V_residual == 0.0 and pt.terminal_g_residual == 0.0


def test_verify_records_failures_instead_of_raising(ex1):
    report = verify_ehjb([(0.0, 12.0)], ex1.params, ex1.measure)
    assert not report.passed
    assert report.points[0].failures[0].startswith("error")


def test_verify_flags_a_better_candidate(ex1):
    # a negative allowance turns every searched candidate into a violation
    from mv_reinsure.generator import EHJBTolerances

    report = verify_ehjb([(0.0, 4.5)], ex1.params, ex1.measure,
                         tolerances=EHJBTolerances(supremum_gap=-1.0))
    assert "supremum" in report.points[0].failures


# generic five-term operator vs reduced form on random inputs
@settings(max_examples=100, deadline=None)
@given(
    x=st.floats(-20, 20), t=st.floats(0, 9), pi=st.floats(-3, 3),
    kind=st.sampled_from(["deductible", "quota", "full"]), level=st.floats(0, 5),
    c=st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
)
def test_generic_matches_shortcut(ex1, x, t, pi, kind, level, c):
    from mv_reinsure.generator import _generic, insurance_drift

    p, cm = ex1.params, ex1.measure
    ret = {"deductible": ExcessLoss(constant(level)),
           "quota": Proportional(constant(min(level / 5, 1.0))), "full": Full()}[kind]
    phi = SeparableFn(lambda s: c[0] + c[1] * s + c[2] * s * s, lambda s: c[1] + 2 * c[2] * s, p)
    shortcut = phi.intercept_derivative(t) + insurance_drift(ret, pi, t, cm, p) * phi.slope(t)
    assert abs(_generic(phi.polynomial(), ret, pi, x, t, cm, p) - shortcut) <= 1e-9
