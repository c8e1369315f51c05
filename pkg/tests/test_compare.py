import io
import math

import numpy as np
import pytest
from scipy import integrate

from mv_reinsure.compare import (
    CSV_HEADER,
    CramerLundbergSpec,
    cl_value_excess,
    cl_value_proportional,
    dominance_table,
    read_dominance_csv,
    write_dominance_csv,
)
from mv_reinsure.equilibrium import expectation_g, proportional_equilibrium_strategy, value_V, variance_mv
from mv_reinsure.model import ClaimMeasure, PointMass, ValidationError
from mv_reinsure.simulate import SimConfig, estimate_objective, simulate_terminal


@pytest.fixture(scope="module")
def spec(ex2):
    return CramerLundbergSpec.from_model(ex2.params, ex2.measure)


def test_requires_cramer_lundberg(ex1, ex2):
    with pytest.raises(ValidationError):
        CramerLundbergSpec.from_model(ex1.params, ex1.measure)
    with pytest.raises(ValidationError):
        CramerLundbergSpec.from_model(ex2.params, ClaimMeasure(1.0, PointMass(2.0)))


def test_terminal_rows(spec):
    for x in (0.0, 5.0, 10.0):
        assert cl_value_excess(x, 3.0, spec) == (x, x, 0.0)
        assert cl_value_proportional(x, 3.0, spec)[0] == x


def test_excess_matches_general_module(spec, ex2):
    p, cm = ex2.params, ex2.measure
    for x, t in [(0.0, 0.0), (4.0, 1.3), (-2.0, 2.7)]:
        V1, g1, var1 = cl_value_excess(x, t, spec)
        assert V1 == pytest.approx(value_V(x, t, p, cm), abs=1e-9)
        assert g1 == pytest.approx(expectation_g(x, t, p, cm), abs=1e-9)
        assert var1 == pytest.approx(variance_mv(x, t, p, cm), abs=1e-9)


def test_proportional_against_closed_form_integrand(spec):
    # exponential claims: E[Y] = 1/k, E[Y^2] = 2/k^2; q*(s) = min(1, eta k/(2 gamma) e^{-r(T-s)})
    p, lam, k = spec.params, spec.lam, spec.kappa

    def parts(s):
        e = math.exp(p.r * (p.T - s))
        q = min(1.0, p.eta * k / (2 * p.gamma) / e)
        sh = ((p.mu - p.r) / p.sigma2) ** 2 / p.gamma
        prem = e * lam / k * ((p.theta - p.eta) + p.eta * q)
        return sh / 2 + prem - p.gamma * e * e * q * q * lam / k**2, sh + prem

    for t in (0.0, 1.5):
        B = integrate.quad(lambda s: parts(s)[0], t, p.T, epsabs=1e-13)[0]
        b = integrate.quad(lambda s: parts(s)[1], t, p.T, epsabs=1e-13)[0]
        V2, g2, var2 = cl_value_proportional(0.0, t, spec)
        assert (V2, g2) == (pytest.approx(B, abs=1e-9), pytest.approx(b, abs=1e-9))
        assert var2 == pytest.approx(2 / p.gamma * (b - B), abs=1e-9)


def test_proportional_value_against_monte_carlo(spec, ex2):
    p, cm = ex2.params, ex2.measure
    s = proportional_equilibrium_strategy(p, cm)
    est = estimate_objective(simulate_terminal(SimConfig(100_000, 100, 23), s, p, cm), p.gamma)
    V2, g2, _ = cl_value_proportional(0.0, 0.0, spec)
    assert abs(est.objective_J - V2) <= 3 * est.se_J
    assert abs(est.mean - g2) <= 3 * est.se_mean


def test_excess_dominates(spec):
    for t in (0.0, 1.0, 2.0):
        for x in (0.0, 5.0, 10.0):
            assert cl_value_excess(x, t, spec)[0] > cl_value_proportional(x, t, spec)[0]
    V1, g1, var1 = cl_value_excess(0.0, 0.0, spec)
    V2, g2, var2 = cl_value_proportional(0.0, 0.0, spec)
    assert g1 > g2 and var1 > var2


def test_table_rows_are_plumbing(spec):
    grid = [(t, x) for t in (0.0, 1.5, 3.0) for x in (0.0, 10.0)]
    rows = dominance_table(grid, spec)
    for (t, x), row in zip(grid, rows):
        assert (row.V1, row.g1, row.Var1) == cl_value_excess(x, t, spec)
        assert (row.V2, row.g2, row.Var2) == cl_value_proportional(x, t, spec)
        if t == 3.0:
            assert row.V1 == row.V2 == x


def test_csv_round_trip(spec):
    rows = dominance_table([(t, 5.0) for t in np.arange(0, 3.01, 0.5)], spec)
    buf = io.StringIO()
    write_dominance_csv(rows, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_dominance_csv(text)
    for a, b in zip(rows, back):
        for name in CSV_HEADER:
            assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-11, abs=1e-12)
