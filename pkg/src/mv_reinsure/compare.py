"""Excess-of-loss versus proportional reinsurance in the Cramer-Lundberg model.

Claims arrive at rate ``lambda`` with exponential sizes of rate ``kappa`` and
there is no surplus diffusion (``sigma1 = 0``). ``V1`` is the equilibrium
value under excess-of-loss reinsurance, written out with the exponential
closed forms

    int_0^m S(y) dy   = (1 - e^{-kappa m}) / kappa
    int_0^m y S(y) dy = (1 - e^{-kappa m}(1 + kappa m)) / kappa**2.

``V2`` is the equilibrium value when the insurer is restricted to quota-share
reinsurance. It has no published closed form here; it is rebuilt from the
equilibrium fraction ``q*`` derived in :mod:`mv_reinsure.equilibrium`, and
``V2_RECONSTRUCTED`` flags it as such.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from functools import lru_cache
from typing import Iterable, Sequence, TextIO

from .equilibrium import (
    mean_intercept_integrand,
    proportional_equilibrium_fraction,
    value_intercept_integrand,
)
from .model import ClaimMeasure, Exponential, ModelParams, Proportional, ValidationError
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings, adaptive_simpson

V2_RECONSTRUCTED = True
CSV_HEADER = ("t", "x", "V1", "V2", "g1", "g2", "Var1", "Var2")


@dataclass(frozen=True)
class CramerLundbergSpec:
    params: ModelParams
    lam: float
    kappa: float

    def __post_init__(self) -> None:
        errors = {}
        if not self.lam > 0:
            errors["claims.lambda"] = "must be > 0"
        if not self.kappa > 0:
            errors["claims.severity.rate"] = "must be > 0"
        if self.params.sigma1 != 0:
            errors["insurance.sigma1"] = "must be 0 in the Cramer-Lundberg model"
        if errors:
            raise ValidationError(errors)

    @classmethod
    def from_model(cls, params: ModelParams, measure: ClaimMeasure) -> "CramerLundbergSpec":
        if not isinstance(measure.severity, Exponential):
            raise ValidationError({"claims.severity.type": "must be exponential"})
        return cls(params, measure.intensity, measure.severity.rate)

    @property
    def measure(self) -> ClaimMeasure:
        return ClaimMeasure(self.lam, Exponential(self.kappa))


def _cl_pieces(s: float, spec: CramerLundbergSpec) -> tuple[float, float, float, float]:
    p, k = spec.params, spec.kappa
    e = math.exp(p.r * (p.T - s))
    m = p.eta / p.gamma / e
    surv = (1.0 - math.exp(-k * m)) / k
    tail = (1.0 - math.exp(-k * m) * (1.0 + k * m)) / (k * k)
    half_sharpe2 = ((p.mu - p.r) / p.sigma2) ** 2 / (2.0 * p.gamma)
    premium = e * ((p.theta - p.eta) * spec.lam / k + p.eta * spec.lam * surv)
    return half_sharpe2, premium, tail, e


def cl_B1_integrand(s: float, spec: CramerLundbergSpec) -> float:
    half_sharpe2, premium, tail, e = _cl_pieces(s, spec)
    return half_sharpe2 + premium - spec.params.gamma * spec.lam * e * e * tail


def cl_b1_integrand(s: float, spec: CramerLundbergSpec) -> float:
    half_sharpe2, premium, _, _ = _cl_pieces(s, spec)
    return 2.0 * half_sharpe2 + premium


@lru_cache(maxsize=4096)
def _excess_intercepts(t: float, spec: CramerLundbergSpec, quad: QuadratureSettings) -> tuple[float, float]:
    T = spec.params.T
    B1 = adaptive_simpson(lambda s: cl_B1_integrand(s, spec), t, T, quad)
    b1 = adaptive_simpson(lambda s: cl_b1_integrand(s, spec), t, T, quad)
    return B1, b1


@lru_cache(maxsize=4096)
def _proportional_intercepts(t: float, spec: CramerLundbergSpec, quad: QuadratureSettings) -> tuple[float, float]:
    p, cm = spec.params, spec.measure
    ret = Proportional(lambda s: proportional_equilibrium_fraction(s, p, cm))
    # q* is capped at 1; the cap switches off where the uncapped fraction crosses 1
    m1, m2 = cm.severity.mean, cm.severity.second_moment
    ratio = p.eta * m1 / (p.gamma * m2)
    knots = [p.T - math.log(ratio) / p.r] if ratio > 1 else []
    B2 = adaptive_simpson(lambda s: value_intercept_integrand(s, p, cm, ret), t, p.T, quad, knots)
    b2 = adaptive_simpson(lambda s: mean_intercept_integrand(s, p, cm, ret), t, p.T, quad, knots)
    return B2, b2


def _triple(x: float, t: float, p: ModelParams, B: float, b: float) -> tuple[float, float, float]:
    e = math.exp(p.r * (p.T - t))
    return e * x + B, e * x + b, 2.0 / p.gamma * (b - B)


def cl_value_excess(x: float, t: float, spec: CramerLundbergSpec,
                    quad: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[float, float, float]:
    """``(V1, g1, Var1)`` under the equilibrium excess-of-loss strategy."""
    spec.params.check_time(t)
    return _triple(x, t, spec.params, *_excess_intercepts(float(t), spec, quad))


def cl_value_proportional(x: float, t: float, spec: CramerLundbergSpec,
                          quad: QuadratureSettings = DEFAULT_QUADRATURE) -> tuple[float, float, float]:
    """``(V2, g2, Var2)`` under the equilibrium quota-share strategy (reconstructed)."""
    spec.params.check_time(t)
    return _triple(x, t, spec.params, *_proportional_intercepts(float(t), spec, quad))


@dataclass(frozen=True)
class DominanceRow:
    t: float
    x: float
    V1: float
    V2: float
    g1: float
    g2: float
    Var1: float
    Var2: float


def dominance_table(grid: Iterable[tuple[float, float]], spec: CramerLundbergSpec,
                    quad: QuadratureSettings = DEFAULT_QUADRATURE) -> list[DominanceRow]:
    rows = []
    for t, x in grid:
        V1, g1, var1 = cl_value_excess(x, t, spec, quad)
        V2, g2, var2 = cl_value_proportional(x, t, spec, quad)
        rows.append(DominanceRow(float(t), float(x), V1, V2, g1, g2, var1, var2))
    return rows


def fmt12(v: float) -> str:
    return f"{v:.12g}"


def write_dominance_csv(rows: Sequence[DominanceRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([fmt12(v) for v in astuple(row)])


def read_dominance_csv(text: str) -> list[DominanceRow]:
    reader = csv.DictReader(io.StringIO(text))
    names = [f.name for f in fields(DominanceRow)]
    return [DominanceRow(*(float(rec[n]) for n in names)) for rec in reader]
