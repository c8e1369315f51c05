"""Closed-form equilibrium strategy and its value/expectation intercepts.

The equilibrium retention is excess-of-loss with deductible
``m*(t) = (eta / gamma) exp(-r (T - t))`` and the equilibrium investment is

    pi*(t) = (mu - r) / (gamma sigma2**2) exp(-r (T - t)) - rho sigma1 / sigma2.

The value function ``V`` and the expected terminal wealth ``g`` are affine in
the surplus with slope ``exp(r (T - t))``; their intercepts ``B`` and ``b``
are time integrals computed here by adaptive Simpson quadrature.

Proportional equilibrium (derived, not a published formula)
-----------------------------------------------------------
Restricting the retention to ``l(z, t) = q z`` in the extended HJB supremand
leaves the ``q``-dependent part

    eta q lambda E[Y] - (gamma / 2) exp(r (T - t)) q**2 lambda E[Y**2],

a concave parabola in ``q``. Its maximiser over ``[0, 1]`` is

    q*(t) = min(1, eta E[Y] / (gamma E[Y**2]) exp(-r (T - t))).

The investment part of the supremand is unchanged, so ``pi*`` is still
optimal. :func:`proportional_equilibrium_fraction` returns this ``q*``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .model import (
    ArrayLike,
    ClaimMeasure,
    ExcessLoss,
    ModelParams,
    Proportional,
    Retention,
    Strategy,
    ValueFunctions,
)
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings, adaptive_simpson

TABLE_POINTS = 512


def equilibrium_deductible(t: ArrayLike, p: ModelParams) -> ArrayLike:
    p.check_time(t)
    return p.eta / p.gamma * np.exp(-p.r * (p.T - np.asarray(t, dtype=float)))


def equilibrium_investment(t: ArrayLike, p: ModelParams) -> ArrayLike:
    p.check_time(t)
    t = np.asarray(t, dtype=float)
    return (p.mu - p.r) / (p.gamma * p.sigma2**2) * np.exp(-p.r * (p.T - t)) - (
        p.rho * p.sigma1 / p.sigma2
    )


def _deductible_schedule(level: float, p: ModelParams):
    """``level * exp(-r (T - t))`` together with its inverse."""

    def deductible(t: ArrayLike) -> ArrayLike:
        return level * np.exp(-p.r * (p.T - np.asarray(t, dtype=float)))

    def crossing_time(a: float) -> float:
        return p.T - math.log(level / a) / p.r

    return deductible, crossing_time


def equilibrium_retention(p: ModelParams) -> ExcessLoss:
    deductible, crossing = _deductible_schedule(p.eta / p.gamma, p)
    return ExcessLoss(deductible, crossing)


def equilibrium_strategy(p: ModelParams) -> Strategy:
    return Strategy(
        equilibrium_retention(p),
        lambda t: equilibrium_investment(t, p),
        p.T,
        label="equilibrium",
    )


def exponential_utility_strategy(t: ArrayLike, p: ModelParams) -> tuple[ArrayLike, ArrayLike]:
    """Optimal (deductible, investment) under exponential utility ``-exp(-gamma x)``."""
    p.check_time(t)
    tau = p.T - np.asarray(t, dtype=float)
    deductible = math.log1p(p.eta) / p.gamma * np.exp(-p.r * tau)
    return deductible, equilibrium_investment(t, p)


def exponential_utility_rule(p: ModelParams) -> Strategy:
    deductible, crossing = _deductible_schedule(math.log1p(p.eta) / p.gamma, p)
    return Strategy(
        ExcessLoss(deductible, crossing),
        lambda t: equilibrium_investment(t, p),
        p.T,
        label="exponential_utility",
    )


def precommit_terminal_retention(z: ArrayLike, x: float, alpha: float, p: ModelParams) -> ArrayLike:
    """Time-``T`` retained claim of the pre-commitment strategy for a given ``alpha``.

    ``eta * (alpha / gamma - x)_+  ^  z``. The multiplier ``alpha`` must come
    from the caller; the fixed point determining it is not solved here.
    """
    if np.any(np.asarray(z) < 0):
        raise ValueError("claim size must be >= 0")
    return np.minimum(p.eta * max(alpha / p.gamma - x, 0.0), z)


def proportional_equilibrium_fraction(t: ArrayLike, p: ModelParams, cm: ClaimMeasure) -> ArrayLike:
    """Equilibrium quota-share fraction ``q*(t)`` (derived; see module docstring)."""
    p.check_time(t)
    m1, m2 = cm.severity.mean, cm.severity.second_moment
    if not m2 > 0:
        raise ValueError("proportional equilibrium needs a positive severity second moment")
    tau = p.T - np.asarray(t, dtype=float)
    return np.minimum(1.0, p.eta * m1 / (p.gamma * m2) * np.exp(-p.r * tau))


def proportional_equilibrium_strategy(p: ModelParams, cm: ClaimMeasure) -> Strategy:
    return Strategy(
        Proportional(lambda t: proportional_equilibrium_fraction(t, p, cm)),
        lambda t: equilibrium_investment(t, p),
        p.T,
        label="proportional_equilibrium",
    )


# ---------------------------------------------------------------------------
# Intercepts
# ---------------------------------------------------------------------------


def value_intercept_integrand(s: float, p: ModelParams, cm: ClaimMeasure, retention: Retention) -> float:
    """Negated ``dB/ds`` when investing ``pi*`` and retaining ``retention``."""
    e = math.exp(p.r * (p.T - s))
    l1, l2 = retention.moments(cm, s)
    sharpe2 = ((p.mu - p.r) / p.sigma2) ** 2
    insurance = (p.theta - p.eta) * cm.mean() + p.eta * l1
    return (
        sharpe2 / (2.0 * p.gamma)
        + e * (-(p.mu - p.r) * p.rho * p.sigma1 / p.sigma2 + insurance)
        - 0.5 * p.gamma * e * e * ((1.0 - p.rho**2) * p.sigma1**2 + l2)
    )


def mean_intercept_integrand(s: float, p: ModelParams, cm: ClaimMeasure, retention: Retention) -> float:
    """Negated ``db/ds`` when investing ``pi*`` and retaining ``retention``."""
    e = math.exp(p.r * (p.T - s))
    l1, _ = retention.moments(cm, s)
    sharpe2 = ((p.mu - p.r) / p.sigma2) ** 2
    insurance = (p.theta - p.eta) * cm.mean() + p.eta * l1
    return sharpe2 / p.gamma + e * (-(p.mu - p.r) * p.rho * p.sigma1 / p.sigma2 + insurance)


def _integrate(integrand, t, p, cm, retention, quad):
    return adaptive_simpson(
        lambda s: integrand(s, p, cm, retention),
        t,
        p.T,
        quad,
        breakpoints=retention.breakpoints(cm, t, p.T),
    )


@lru_cache(maxsize=4096)
def _intercept(kind: str, t: float, p: ModelParams, cm: ClaimMeasure, quad: QuadratureSettings) -> float:
    integrand = value_intercept_integrand if kind == "B" else mean_intercept_integrand
    return _integrate(integrand, t, p, cm, equilibrium_retention(p), quad)


def intercept_B(
    t: float, p: ModelParams, cm: ClaimMeasure, quad: QuadratureSettings = DEFAULT_QUADRATURE
) -> float:
    p.check_time(t)
    return _intercept("B", float(t), p, cm, quad)


def intercept_b(
    t: float, p: ModelParams, cm: ClaimMeasure, quad: QuadratureSettings = DEFAULT_QUADRATURE
) -> float:
    p.check_time(t)
    return _intercept("b", float(t), p, cm, quad)


def tabulate_intercept(
    integrand, p: ModelParams, cm: ClaimMeasure, retention: Retention,
    quad: QuadratureSettings = DEFAULT_QUADRATURE, n: int = TABLE_POINTS,
) -> CubicSpline:
    """Cubic interpolant of ``int_t^T integrand`` on an ``n``-point uniform grid."""
    grid = np.linspace(0.0, p.T, n)
    seg_quad = QuadratureSettings(quad.tol / (n - 1), quad.max_depth)
    pieces = np.array(
        [
            adaptive_simpson(
                lambda s: integrand(s, p, cm, retention), lo, hi, seg_quad,
                breakpoints=retention.breakpoints(cm, lo, hi),
            )
            for lo, hi in zip(grid[:-1], grid[1:])
        ]
    )
    values = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return CubicSpline(grid, values)


def equilibrium_value_functions(
    p: ModelParams,
    cm: ClaimMeasure,
    quad: QuadratureSettings = DEFAULT_QUADRATURE,
    tabulate: bool = False,
) -> ValueFunctions:
    """``(V, g)`` for the equilibrium strategy.

    With ``tabulate=True`` the intercepts are read from 512-point cubic
    interpolants (fast repeated evaluation); otherwise every call integrates.
    """
    if tabulate:
        ret = equilibrium_retention(p)
        B_tab = tabulate_intercept(value_intercept_integrand, p, cm, ret, quad)
        b_tab = tabulate_intercept(mean_intercept_integrand, p, cm, ret, quad)
        return ValueFunctions(lambda t: float(B_tab(t)), lambda t: float(b_tab(t)), p)
    return ValueFunctions(
        lambda t: intercept_B(t, p, cm, quad), lambda t: intercept_b(t, p, cm, quad), p
    )


def value_V(x: float, t: float, p: ModelParams, cm: ClaimMeasure, quad=DEFAULT_QUADRATURE) -> float:
    return equilibrium_value_functions(p, cm, quad).V(x, t)


def expectation_g(x: float, t: float, p: ModelParams, cm: ClaimMeasure, quad=DEFAULT_QUADRATURE) -> float:
    return equilibrium_value_functions(p, cm, quad).g(x, t)


def variance_mv(x: float, t: float, p: ModelParams, cm: ClaimMeasure, quad=DEFAULT_QUADRATURE) -> float:
    return equilibrium_value_functions(p, cm, quad).variance(x, t)


# ---------------------------------------------------------------------------
# Moments of terminal wealth under an arbitrary deterministic strategy
# ---------------------------------------------------------------------------


def strategy_moments(
    strategy: Strategy,
    x: float,
    t: float,
    p: ModelParams,
    cm: ClaimMeasure,
    quad: QuadratureSettings = DEFAULT_QUADRATURE,
    breakpoints: tuple[float, ...] = (),
) -> tuple[float, float]:
    """Exact mean and variance of ``X_T`` given ``X_t = x``.

    Because neither control depends on the surplus, the discounted wealth
    ``exp(r (T - s)) X_s`` has deterministic drift and diffusion coefficients:

        E[X_T]   = e^{r(T-t)} x + int_t^T e^{r(T-s)} C(s) ds
        Var[X_T] = int_t^T e^{2r(T-s)} (sigma(pi_s)**2 + int l(z, s)**2 nu(dz)) ds

    with ``C(s) = (mu - r) pi_s + int ((theta - eta) z + eta l(z, s)) nu(dz)``.
    """
    p.check_time(t)
    ret = strategy.retention
    knots = tuple(ret.breakpoints(cm, t, p.T)) + tuple(breakpoints)

    def drift(s: float) -> float:
        pi = float(strategy.investment(s))
        l1, _ = ret.moments(cm, s)
        c = (p.mu - p.r) * pi + (p.theta - p.eta) * cm.mean() + p.eta * l1
        return math.exp(p.r * (p.T - s)) * c

    def spread(s: float) -> float:
        pi = float(strategy.investment(s))
        _, l2 = ret.moments(cm, s)
        diff2 = p.sigma1**2 + 2 * p.rho * p.sigma1 * p.sigma2 * pi + (p.sigma2 * pi) ** 2
        return math.exp(2 * p.r * (p.T - s)) * (diff2 + l2)

    mean = float(p.growth(t)) * x + adaptive_simpson(drift, t, p.T, quad, knots)
    var = adaptive_simpson(spread, t, p.T, quad, knots)
    return mean, var


def strategy_objective(
    strategy: Strategy, x: float, t: float, p: ModelParams, cm: ClaimMeasure,
    quad: QuadratureSettings = DEFAULT_QUADRATURE, breakpoints: tuple[float, ...] = (),
) -> float:
    """Mean-variance objective ``J^u(x, t)`` of a deterministic strategy."""
    mean, var = strategy_moments(strategy, x, t, p, cm, quad, breakpoints)
    return mean - 0.5 * p.gamma * var
