"""Integro-differential generator and extended-HJB certification.

The generator of the controlled surplus acting on ``phi(x, t)`` is

    A phi = phi_t + [r x + (mu - r) pi + int ((theta - eta) z + (1 + eta) l) nu(dz)] phi_x
            + 1/2 (sigma1**2 + 2 rho sigma1 sigma2 pi + sigma2**2 pi**2) phi_xx
            + int (phi(x - l, t) - phi(x, t)) nu(dz).

It is evaluated here on functions that are polynomials of degree at most two
in ``x`` with time-dependent coefficients. That class contains the separable
``V`` and ``g`` as well as ``g**2``, which is all the extended HJB system needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from .equilibrium import (
    equilibrium_investment,
    equilibrium_retention,
    equilibrium_value_functions,
    exponential_utility_rule,
    intercept_B,
    intercept_b,
    mean_intercept_integrand,
    value_intercept_integrand,
)
from .model import ClaimMeasure, ExcessLoss, Full, ModelParams, Proportional, Retention, constant
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings


class UnsupportedFunction(TypeError):
    """The generator was asked to act on a function outside its domain."""


class GeneratorMismatch(ArithmeticError):
    """Generic and shortcut generator evaluations disagree."""


GENERATOR_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class SeparableFn:
    """``phi(x, t) = exp(r (T - t)) x + beta(t)``."""

    intercept: Callable[[float], float]
    intercept_derivative: Callable[[float], float]
    params: ModelParams

    def slope(self, t: float) -> float:
        return math.exp(self.params.r * (self.params.T - t))

    def __call__(self, x: float, t: float) -> float:
        return self.slope(t) * x + self.intercept(t)

    def check_consistency(self, t: float, h: float = 1e-3, rtol: float = 1e-6) -> bool:
        """Spot-check ``beta'`` against a central difference of ``beta``."""
        lo, hi = max(t - h, 0.0), min(t + h, self.params.T)
        fd = (self.intercept(hi) - self.intercept(lo)) / (hi - lo)
        exact = self.intercept_derivative(t)
        return abs(fd - exact) <= rtol * max(1.0, abs(exact))

    def polynomial(self) -> "_QuadraticInX":
        r = self.params.r
        return _QuadraticInX(
            coef=(self.intercept, self.slope, lambda t: 0.0),
            coef_dt=(self.intercept_derivative, lambda t: -r * self.slope(t), lambda t: 0.0),
        )


@dataclass(frozen=True)
class _QuadraticInX:
    """``c0(t) + c1(t) x + c2(t) x**2`` with explicit time derivatives."""

    coef: tuple[Callable[[float], float], ...]
    coef_dt: tuple[Callable[[float], float], ...]

    def value(self, x: float, t: float) -> float:
        c0, c1, c2 = (c(t) for c in self.coef)
        return c0 + c1 * x + c2 * x * x

    def dt(self, x: float, t: float) -> float:
        d0, d1, d2 = (c(t) for c in self.coef_dt)
        return d0 + d1 * x + d2 * x * x

    def dx(self, x: float, t: float) -> float:
        return self.coef[1](t) + 2.0 * self.coef[2](t) * x

    def dxx(self, x: float, t: float) -> float:
        return 2.0 * self.coef[2](t)

    def jump_integral(self, x: float, t: float, l1: float, l2: float) -> float:
        # int (phi(x - l) - phi(x)) nu(dz) = -phi_x(x) int l nu + c2 int l^2 nu
        return -self.dx(x, t) * l1 + self.coef[2](t) * l2


def _square(phi: SeparableFn) -> _QuadraticInX:
    """``phi**2`` for separable ``phi``."""
    r = phi.params.r
    beta, dbeta, e = phi.intercept, phi.intercept_derivative, phi.slope
    return _QuadraticInX(
        coef=(lambda t: beta(t) ** 2, lambda t: 2 * e(t) * beta(t), lambda t: e(t) ** 2),
        coef_dt=(
            lambda t: 2 * beta(t) * dbeta(t),
            lambda t: 2 * (-r * e(t) * beta(t) + e(t) * dbeta(t)),
            lambda t: -2 * r * e(t) ** 2,
        ),
    )


def _diffusion_variance(pi: float, p: ModelParams) -> float:
    return p.sigma1**2 + 2 * p.rho * p.sigma1 * p.sigma2 * pi + p.sigma2**2 * pi**2


def _generic(phi: _QuadraticInX, retention: Retention, pi: float, x: float, t: float,
             cm: ClaimMeasure, p: ModelParams) -> float:
    l1, l2 = retention.moments(cm, t)
    drift = p.r * x + (p.mu - p.r) * pi + (p.theta - p.eta) * cm.mean() + (1 + p.eta) * l1
    return (
        phi.dt(x, t)
        + drift * phi.dx(x, t)
        + 0.5 * _diffusion_variance(pi, p) * phi.dxx(x, t)
        + phi.jump_integral(x, t, l1, l2)
    )


def insurance_drift(retention: Retention, pi: float, t: float, cm: ClaimMeasure, p: ModelParams) -> float:
    """``C^{l,pi}(t) = (mu - r) pi + int ((theta - eta) z + eta l(z, t)) nu(dz)``."""
    l1, _ = retention.moments(cm, t)
    return (p.mu - p.r) * pi + (p.theta - p.eta) * cm.mean() + p.eta * l1


def apply_generator(phi: SeparableFn, retention: Retention, pi: float, x: float, t: float,
                    cm: ClaimMeasure, p: ModelParams) -> float:
    """``A^{l,pi} phi(x, t)`` for separable ``phi``.

    Both the full five-term operator and the reduced form
    ``beta'(t) + C^{l,pi}(t) e^{r(T-t)}`` are computed; a disagreement above
    ``GENERATOR_AGREEMENT_TOL`` raises :class:`GeneratorMismatch`. The reduced
    form is returned, so the result is exactly independent of ``x``.
    """
    if not isinstance(phi, SeparableFn):
        raise UnsupportedFunction(f"generator only acts on SeparableFn, got {type(phi).__name__}")
    p.check_time(t)
    shortcut = phi.intercept_derivative(t) + insurance_drift(retention, pi, t, cm, p) * phi.slope(t)
    generic = _generic(phi.polynomial(), retention, pi, x, t, cm, p)
    scale = max(1.0, abs(shortcut), abs(p.r * x * phi.slope(t)))
    if abs(generic - shortcut) > GENERATOR_AGREEMENT_TOL * scale:
        raise GeneratorMismatch(f"generic {generic!r} vs shortcut {shortcut!r} at x={x}, t={t}")
    return shortcut


def ehjb_objective(retention: Retention, pi: float, t: float, B_prime: float,
                   cm: ClaimMeasure, p: ModelParams) -> float:
    """Supremand of the extended HJB equation after substituting separable ``V, g``."""
    e = math.exp(p.r * (p.T - t))
    _, l2 = retention.moments(cm, t)
    return (
        B_prime
        + insurance_drift(retention, pi, t, cm, p) * e
        - 0.5 * p.gamma * e * e * (_diffusion_variance(pi, p) + l2)
    )


def ehjb_full(V: SeparableFn, g: SeparableFn, retention: Retention, pi: float, x: float, t: float,
              cm: ClaimMeasure, p: ModelParams) -> float:
    """``A V - (gamma/2) A g**2 + gamma g A g`` with every term from the generic operator."""
    AV = _generic(V.polynomial(), retention, pi, x, t, cm, p)
    Ag = _generic(g.polynomial(), retention, pi, x, t, cm, p)
    Ag2 = _generic(_square(g), retention, pi, x, t, cm, p)
    return AV - 0.5 * p.gamma * Ag2 + p.gamma * g(x, t) * Ag


def retention_supremand(ell, z, t: float, p: ModelParams):
    """``eta l - (gamma/2) e^{r(T-t)} l**2``: the per-claim part maximised by ``l*``."""
    return p.eta * ell - 0.5 * p.gamma * math.exp(p.r * (p.T - t)) * ell * ell


def equilibrium_separable(p: ModelParams, cm: ClaimMeasure,
                          quad: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[SeparableFn, SeparableFn]:
    """``(V, g)`` as separable functions with analytic intercept derivatives."""
    ret = equilibrium_retention(p)
    V = SeparableFn(
        lambda t: intercept_B(t, p, cm, quad),
        lambda t: -value_intercept_integrand(t, p, cm, ret),
        p,
    )
    g = SeparableFn(
        lambda t: intercept_b(t, p, cm, quad),
        lambda t: -mean_intercept_integrand(t, p, cm, ret),
        p,
    )
    return V, g


# ---------------------------------------------------------------------------
# Verification report
# ---------------------------------------------------------------------------

DEDUCTIBLE_OFFSETS = (0.5, 0.1, 0.01)
INVESTMENT_OFFSETS = (0.5, 0.1, 0.01)


@dataclass(frozen=True)
class EHJBTolerances:
    ehjb1: float = 1e-7
    supremum_gap: float = 1e-9
    generator_g: float = 1e-8
    terminal: float = 0.0


@dataclass
class EHJBPoint:
    x: float
    t: float
    ehjb1_residual: float
    ehjb1_full_residual: float
    supremum_gap: float
    best_candidate: str
    generator_g_residual: float
    terminal_V_residual: float
    terminal_g_residual: float
    passed: bool = False
    failures: list[str] = field(default_factory=list)


@dataclass
class EHJBReport:
    points: list[EHJBPoint]
    tolerances: EHJBTolerances

    @property
    def passed(self) -> bool:
        return all(pt.passed for pt in self.points)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerances": asdict(self.tolerances),
            "points": [asdict(pt) for pt in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _candidates(t: float, p: ModelParams, cm: ClaimMeasure, extra: Iterable[tuple[str, Retention]]):
    m_star = float(equilibrium_retention(p).deductible(t))
    pi_star = float(equilibrium_investment(t, p))
    dm = [0.0] + [s * f * m_star for f in DEDUCTIBLE_OFFSETS for s in (1, -1)]
    dpi = [0.0] + [s * f * max(1.0, abs(pi_star)) for f in INVESTMENT_OFFSETS for s in (1, -1)]
    retentions = [(f"deductible m*{d:+.4g}", ExcessLoss(constant(m_star + d))) for d in dm]
    ul = float(exponential_utility_rule(p).retention.deductible(t))
    retentions += [
        ("exponential_utility", ExcessLoss(constant(ul))),
        ("full", Full()),
        ("zero", Proportional(constant(0.0))),
    ]
    retentions += list(extra)
    for name, ret in retentions:
        for d in dpi:
            if name.startswith("deductible") and name.endswith("+0") and d == 0.0:
                continue  # the equilibrium itself
            yield f"{name}, pi*{d:+.4g}", ret, pi_star + d


def verify_ehjb(
    grid: Sequence[tuple[float, float]],
    p: ModelParams,
    cm: ClaimMeasure,
    quad: QuadratureSettings = DEFAULT_QUADRATURE,
    tolerances: EHJBTolerances = EHJBTolerances(),
    extra_retentions: Sequence[tuple[str, Retention]] = (),
) -> EHJBReport:
    """Check the extended HJB conditions for the closed forms at each ``(x, t)``.

    Per point: the EHJB1 residual at ``(l*, pi*)`` (reduced and fully generic),
    the largest improvement any searched control achieves over ``(l*, pi*)``
    (must not be positive), ``|A^{l*,pi*} g|``, and the terminal conditions.
    Failures are recorded, never raised.
    """
    V, g = equilibrium_separable(p, cm, quad)
    vf = equilibrium_value_functions(p, cm, quad)
    ret_star = equilibrium_retention(p)
    points = []
    for x, t in grid:
        x, t = float(x), float(t)
        failures = []
        try:
            p.check_time(t)
            pi_star = float(equilibrium_investment(t, p))
            B_prime = V.intercept_derivative(t)
            at_star = ehjb_objective(ret_star, pi_star, t, B_prime, cm, p)
            full = ehjb_full(V, g, ret_star, pi_star, x, t, cm, p)
            best, best_name = -math.inf, ""
            for name, ret, pi in _candidates(t, p, cm, extra_retentions):
                val = ehjb_objective(ret, pi, t, B_prime, cm, p)
                if val > best:
                    best, best_name = val, name
            gap = best - at_star
            gen_g = apply_generator(g, ret_star, pi_star, x, t, cm, p)
            tv = abs(vf.V(x, p.T) - x)
            tg = abs(vf.g(x, p.T) - x)
            pt = EHJBPoint(x, t, abs(at_star), abs(full), gap, best_name, abs(gen_g), tv, tg)
            if pt.ehjb1_residual >= tolerances.ehjb1:
                failures.append("ehjb1")
            if pt.ehjb1_full_residual >= tolerances.ehjb1:
                failures.append("ehjb1_full")
            if pt.supremum_gap > tolerances.supremum_gap:
                failures.append("supremum")
            if pt.generator_g_residual >= tolerances.generator_g:
                failures.append("ehjb2")
            if tv > tolerances.terminal or tg > tolerances.terminal:
                failures.append("ehjb3")
        except Exception as exc:  # recorded, the grid continues
            nan = math.nan
            pt = EHJBPoint(x, t, nan, nan, nan, "", nan, nan, nan)
            failures.append(f"error: {exc}")
        pt.failures = failures
        pt.passed = not failures
        points.append(pt)
    return EHJBReport(points, tolerances)
