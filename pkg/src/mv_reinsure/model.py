"""Model parameters, the claim (Levy) measure and strategy representations.

Everything here is immutable. Retention rules and investment schedules are
vectorised over ``t`` (and ``z``) so the simulator can evaluate them on whole
arrays of jump times at once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]
Schedule = Callable[[ArrayLike], ArrayLike]


class ValidationError(ValueError):
    """Raised when parameters violate model invariants.

    ``errors`` maps each offending field name to a human-readable message.
    """

    def __init__(self, errors: dict[str, str]):
        self.errors = dict(errors)
        detail = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(f"invalid parameters: {detail}")


class LoadingWarning(UserWarning):
    """Reinsurance loading does not exceed the insurer's loading."""


PARAM_FIELDS = ("r", "mu", "sigma1", "sigma2", "rho", "theta", "eta", "gamma", "T")


def param_violations(v: dict) -> dict[str, str]:
    """Every violated parameter invariant, keyed by field name."""
    errors: dict[str, str] = {}
    for name in PARAM_FIELDS:
        x = v.get(name)
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            errors[name] = f"must be a finite real number, got {x!r}"
    ok = {k: v[k] for k in PARAM_FIELDS if k not in errors}
    checks = {
        "r": (lambda: ok["r"] > 0, "must be > 0"),
        "mu": (lambda: "r" not in ok or ok["mu"] > ok["r"], "must exceed r"),
        "sigma1": (lambda: ok["sigma1"] >= 0, "must be >= 0"),
        "sigma2": (lambda: ok["sigma2"] > 0, "must be > 0"),
        "rho": (lambda: -1 < ok["rho"] < 1, "must lie in the open interval (-1, 1)"),
        "theta": (lambda: ok["theta"] > 0, "must be > 0"),
        "eta": (lambda: ok["eta"] > 0, "must be > 0"),
        "gamma": (lambda: ok["gamma"] > 0, "must be > 0"),
        "T": (lambda: ok["T"] > 0, "must be > 0"),
    }
    for k, (check, msg) in checks.items():
        if k in ok and not check():
            errors[k] = msg
    return errors


@dataclass(frozen=True)
class ModelParams:
    """Market, insurance and preference parameters.

    Attributes
    ----------
    r, mu, sigma2, rho : float
        Risk-free rate, risky drift and volatility, and correlation between the
        surplus and asset Brownian motions.
    sigma1 : float
        Surplus diffusion volatility; zero gives a pure Cramer-Lundberg surplus.
    theta, eta : float
        Safety loadings of the insurer and reinsurer.
    gamma : float
        Absolute risk aversion in the mean-variance objective.
    T : float
        Horizon.
    """

    r: float
    mu: float
    sigma1: float
    sigma2: float
    rho: float
    theta: float
    eta: float
    gamma: float
    T: float

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValidationError(errors)
        if self.eta_not_above_theta:
            warnings.warn(
                f"eta={self.eta} <= theta={self.theta}: reinsurance is not dearer "
                "than primary insurance",
                LoadingWarning,
                stacklevel=3,
            )

    def violations(self) -> dict[str, str]:
        return param_violations(self.to_dict())

    @property
    def eta_not_above_theta(self) -> bool:
        return self.eta <= self.theta

    def growth(self, t: ArrayLike) -> ArrayLike:
        """Discount-to-horizon factor ``exp(r (T - t))``."""
        return np.exp(self.r * (self.T - np.asarray(t, dtype=float)))

    def check_time(self, t: ArrayLike) -> None:
        ta = np.asarray(t, dtype=float)
        if np.any(ta < 0) or np.any(ta > self.T) or np.any(np.isnan(ta)):
            raise ValueError(f"time {t!r} outside [0, {self.T}]")

    def replace(self, **changes: float) -> "ModelParams":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# Severity distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValidationError({"severity.rate": "must be a finite positive number"})

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def second_moment(self) -> float:
        return 2.0 / self.rate**2

    def survival_integral(self, m: ArrayLike) -> ArrayLike:
        # E[min(Y, m)] = (1 - exp(-k m)) / k
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return -np.expm1(-self.rate * m) / self.rate

    def tail_moment(self, m: ArrayLike) -> ArrayLike:
        # int_0^m y e^{-k y} dy = (1 - e^{-k m}(1 + k m)) / k^2
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        km = self.rate * m
        return (-np.expm1(-km) - km * np.exp(-km)) / self.rate**2

    def atoms(self) -> tuple[float, ...]:
        return ()

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return -np.log1p(-u) / self.rate

    def to_dict(self) -> dict:
        return {"type": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class PointMass:
    size: float

    def __post_init__(self) -> None:
        if not (self.size > 0 and math.isfinite(self.size)):
            raise ValidationError({"severity.size": "must be a finite positive number"})

    @property
    def mean(self) -> float:
        return self.size

    @property
    def second_moment(self) -> float:
        return self.size**2

    def survival_integral(self, m: ArrayLike) -> ArrayLike:
        return np.clip(np.asarray(m, dtype=float), 0.0, self.size)

    def tail_moment(self, m: ArrayLike) -> ArrayLike:
        return 0.5 * np.clip(np.asarray(m, dtype=float), 0.0, self.size) ** 2

    def atoms(self) -> tuple[float, ...]:
        return (self.size,)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return np.full_like(u, self.size, dtype=float)

    def to_dict(self) -> dict:
        return {"type": "point_mass", "size": self.size}


@dataclass(frozen=True)
class Empirical:
    """Equal-weight empirical severity on a sorted sample.

    The survival function is a step function, so the partial integrals are
    evaluated exactly as sample means of ``min(Y, m)`` and ``min(Y, m)**2 / 2``.
    """

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise ValidationError({"severity.values": "must be non-empty"})
        if vals[0] < 0 or not all(math.isfinite(v) for v in vals):
            raise ValidationError({"severity.values": "must be finite and >= 0"})
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_arr", np.array(vals))

    @property
    def mean(self) -> float:
        return float(np.mean(self._arr))

    @property
    def second_moment(self) -> float:
        return float(np.mean(self._arr**2))

    def survival_integral(self, m: ArrayLike) -> ArrayLike:
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return np.mean(np.minimum(self._arr, m[..., None]), axis=-1)

    def tail_moment(self, m: ArrayLike) -> ArrayLike:
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        return 0.5 * np.mean(np.minimum(self._arr, m[..., None]) ** 2, axis=-1)

    def atoms(self) -> tuple[float, ...]:
        return tuple(sorted(set(v for v in self.values if v > 0)))

    def quantile(self, u: np.ndarray) -> np.ndarray:
        n = len(self._arr)
        idx = np.minimum((u * n).astype(np.int64), n - 1)
        return self._arr[idx]

    def to_dict(self) -> dict:
        return {"type": "empirical", "values": list(self.values)}


Severity = Union[Exponential, PointMass, Empirical]


@dataclass(frozen=True)
class ClaimMeasure:
    """Finite-activity Levy measure ``nu = intensity * F``."""

    intensity: float
    severity: Severity

    def __post_init__(self) -> None:
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise ValidationError({"claims.lambda": "must be finite and >= 0"})

    def mean(self) -> float:
        """``int z nu(dz)``."""
        return self.intensity * self.severity.mean

    def second_moment(self) -> float:
        """``int z**2 nu(dz)``."""
        return self.intensity * self.severity.second_moment

    def partial_survival_integral(self, m: ArrayLike) -> ArrayLike:
        """``lambda * int_0^m S(y) dy``, equal to ``int min(z, m) nu(dz)``."""
        return self.intensity * self.severity.survival_integral(m)

    def partial_tail_moment(self, m: ArrayLike) -> ArrayLike:
        """``lambda * int_0^m y S(y) dy``, half of ``int min(z, m)**2 nu(dz)``."""
        return self.intensity * self.severity.tail_moment(m)

    def to_dict(self) -> dict:
        return {"lambda": self.intensity, "severity": self.severity.to_dict()}


# ---------------------------------------------------------------------------
# Retention rules
# ---------------------------------------------------------------------------


def constant(value: float) -> Schedule:
    def schedule(t: ArrayLike) -> ArrayLike:
        return np.full(np.shape(t), float(value)) if np.ndim(t) else float(value)

    schedule.value = float(value)  # type: ignore[attr-defined]
    return schedule


@dataclass(frozen=True)
class ExcessLoss:
    """Retain ``min(m(t), z)``; ``deductible`` is a vectorised schedule."""

    deductible: Schedule
    # inverse of the deductible schedule: time at which m(t) equals a level
    crossing_time: Callable[[float], float] | None = None

    def retained(self, z: ArrayLike, t: ArrayLike) -> ArrayLike:
        m = self.deductible(t)
        if np.any(np.asarray(m) < 0):
            raise ValueError("deductible must be >= 0")
        return np.minimum(m, z)

    def moments(self, cm: ClaimMeasure, t: float) -> tuple[float, float]:
        m = float(self.deductible(t))
        return (
            float(cm.partial_survival_integral(m)),
            2.0 * float(cm.partial_tail_moment(m)),
        )

    def breakpoints(self, cm: ClaimMeasure, a: float, b: float) -> list[float]:
        if self.crossing_time is None:
            return []
        times = (self.crossing_time(level) for level in cm.severity.atoms())
        return sorted(s for s in times if a < s < b)


@dataclass(frozen=True)
class Proportional:
    """Retain ``q(t) * z`` with ``q(t)`` in ``[0, 1]``."""

    fraction: Schedule

    def retained(self, z: ArrayLike, t: ArrayLike) -> ArrayLike:
        q = np.asarray(self.fraction(t))
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("proportional fraction must lie in [0, 1]")
        return q * z

    def moments(self, cm: ClaimMeasure, t: float) -> tuple[float, float]:
        q = float(self.fraction(t))
        return q * cm.mean(), q * q * cm.second_moment()

    def breakpoints(self, cm: ClaimMeasure, a: float, b: float) -> list[float]:
        return []


@dataclass(frozen=True)
class Full:
    """No reinsurance: the insurer keeps every claim."""

    def retained(self, z: ArrayLike, t: ArrayLike) -> ArrayLike:
        return np.asarray(z, dtype=float) + 0.0 * np.asarray(t, dtype=float)

    def moments(self, cm: ClaimMeasure, t: float) -> tuple[float, float]:
        return cm.mean(), cm.second_moment()

    def breakpoints(self, cm: ClaimMeasure, a: float, b: float) -> list[float]:
        return []


@dataclass(frozen=True)
class ConstantSpike:
    """``spike`` on ``[start, end)`` and ``base`` elsewhere."""

    base: "Retention"
    spike: "Retention"
    start: float
    end: float

    def _inside(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return (t >= self.start) & (t < self.end)

    def retained(self, z: ArrayLike, t: ArrayLike) -> ArrayLike:
        z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
        inside = self._inside(t)
        out = np.empty(z.shape)
        if np.any(inside):
            out[inside] = self.spike.retained(z[inside], t[inside])
        if np.any(~inside):
            out[~inside] = self.base.retained(z[~inside], t[~inside])
        return out if out.ndim else float(out)

    def moments(self, cm: ClaimMeasure, t: float) -> tuple[float, float]:
        return (self.spike if self._inside(t) else self.base).moments(cm, t)

    def breakpoints(self, cm: ClaimMeasure, a: float, b: float) -> list[float]:
        pts = [s for s in (self.start, self.end) if a < s < b]
        pts += [s for s in self.base.breakpoints(cm, a, b) if not self.start <= s < self.end]
        pts += [s for s in self.spike.breakpoints(cm, a, b) if self.start <= s < self.end]
        return sorted(set(pts))


Retention = Union[ExcessLoss, Proportional, Full, ConstantSpike]


@dataclass(frozen=True)
class Strategy:
    """Feedback strategy: retention ``l(z, t)`` and investment ``pi(t)``.

    Neither component depends on the surplus.
    """

    retention: Retention
    investment: Schedule
    horizon: float
    label: str = field(default="", compare=False)

    def retained_claim(self, z: ArrayLike, t: ArrayLike) -> ArrayLike:
        ta = np.asarray(t, dtype=float)
        if np.any(ta < 0) or np.any(ta > self.horizon):
            raise ValueError(f"time {t!r} outside [0, {self.horizon}]")
        if np.any(np.asarray(z) < 0):
            raise ValueError("claim size must be >= 0")
        return self.retention.retained(z, t)

    def spiked(self, retention: Retention, pi_bar: float, start: float, end: float) -> "Strategy":
        """Replace the strategy by ``(retention, pi_bar)`` on ``[start, end)``."""
        base_pi = self.investment

        def investment(t: ArrayLike) -> ArrayLike:
            ta = np.asarray(t, dtype=float)
            inside = (ta >= start) & (ta < end)
            return np.where(inside, pi_bar, base_pi(ta)) if ta.ndim else (
                float(pi_bar) if inside else float(base_pi(ta))
            )

        return Strategy(
            ConstantSpike(self.retention, retention, start, end),
            investment,
            self.horizon,
            label=f"{self.label}+spike",
        )


def retained_claim(strategy: Strategy, z: ArrayLike, t: ArrayLike) -> ArrayLike:
    return strategy.retained_claim(z, t)


def claim_mean(measure: ClaimMeasure) -> float:
    return measure.mean()


@dataclass(frozen=True)
class ValueFunctions:
    """Separable pair ``V = e^{r(T-t)} x + B(t)``, ``g = e^{r(T-t)} x + b(t)``."""

    B: Callable[[float], float]
    b: Callable[[float], float]
    params: ModelParams

    def V(self, x: float, t: float) -> float:
        self.params.check_time(t)
        return float(self.params.growth(t)) * x + self.B(t)

    def g(self, x: float, t: float) -> float:
        self.params.check_time(t)
        return float(self.params.growth(t)) * x + self.b(t)

    def variance(self, x: float, t: float) -> float:
        # x cancels; use the intercepts directly to avoid cancellation at large |x|
        self.params.check_time(t)
        var = 2.0 / self.params.gamma * (self.b(t) - self.B(t))
        if var < -1e-12:
            raise ArithmeticError(f"negative terminal variance {var} at t={t}")
        return max(var, 0.0)
