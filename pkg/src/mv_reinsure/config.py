"""JSON configuration files.

Schema (exact key names)::

    {
      "market":     {"r": .., "mu": .., "sigma2": .., "rho": ..},
      "insurance":  {"sigma1": .., "theta": .., "eta": ..},
      "preference": {"gamma": .., "T": ..},
      "claims":     {"lambda": .., "severity": {"type": "exponential", "rate": ..}
                                             | {"type": "point_mass", "size": ..}
                                             | {"type": "empirical", "values": [..]}},
      "state":      {"x0": .., "t0": ..},
      "quadrature": {"tol": .., "max_depth": ..}          (optional)
    }

Claim sizes and surplus are in the same monetary unit.
"""

from __future__ import annotations

import json
import warnings
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple

from .model import (
    ClaimMeasure,
    Empirical,
    Exponential,
    ModelParams,
    PointMass,
    ValidationError,
    param_violations,
)
from .quadrature import DEFAULT_QUADRATURE, QuadratureSettings

SECTIONS = {
    "market": ("r", "mu", "sigma2", "rho"),
    "insurance": ("sigma1", "theta", "eta"),
    "preference": ("gamma", "T"),
}


class ConfigError(ValueError):
    """The configuration file could not be read or parsed."""


class Config(NamedTuple):
    params: ModelParams
    measure: ClaimMeasure
    x0: float
    t0: float


def _section(d: dict, name: str, errors: dict[str, str]) -> dict:
    sec = d.get(name)
    if not isinstance(sec, dict):
        errors[name] = "missing section"
        return {}
    return sec


def _severity(spec: Any, errors: dict[str, str]):
    if not isinstance(spec, dict):
        errors["claims.severity"] = "missing severity object"
        return None
    kind = spec.get("type")
    try:
        if kind == "exponential":
            return Exponential(spec["rate"])
        if kind == "point_mass":
            return PointMass(spec["size"])
        if kind == "empirical":
            return Empirical(tuple(spec["values"]))
    except KeyError as exc:
        errors[f"claims.severity.{exc.args[0]}"] = "missing"
        return None
    except (TypeError, ValidationError) as exc:
        errors.update(getattr(exc, "errors", {"claims.severity": str(exc)}))
        return None
    errors["claims.severity.type"] = f"unknown severity type {kind!r}"
    return None


def parse_config(d: dict) -> Config:
    """Validate a config mapping; raises :class:`ValidationError` listing every problem."""
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    errors: dict[str, str] = {}
    values: dict[str, Any] = {}
    for sec_name, keys in SECTIONS.items():
        sec = _section(d, sec_name, errors)
        for k in keys:
            values[k] = sec.get(k)
    for k, msg in param_violations(values).items():
        section = next(s for s, ks in SECTIONS.items() if k in ks)
        errors[f"{section}.{k}"] = msg

    claims = _section(d, "claims", errors)
    severity = _severity(claims.get("severity"), errors) if claims else None
    lam = claims.get("lambda")
    if claims and (isinstance(lam, bool) or not isinstance(lam, (int, float)) or not lam >= 0):
        errors["claims.lambda"] = f"must be a real number >= 0, got {lam!r}"

    state = _section(d, "state", errors)
    x0, t0 = state.get("x0"), state.get("t0")
    if state:
        if isinstance(x0, bool) or not isinstance(x0, (int, float)):
            errors["state.x0"] = f"must be a real number, got {x0!r}"
        if isinstance(t0, bool) or not isinstance(t0, (int, float)):
            errors["state.t0"] = f"must be a real number, got {t0!r}"
        elif isinstance(values.get("T"), (int, float)) and not 0 <= t0 <= values["T"]:
            errors["state.t0"] = "must lie in [0, T]"
    if "quadrature" in d:
        try:
            parse_quadrature(d)
        except (TypeError, ValueError) as exc:
            errors["quadrature"] = str(exc)
    if errors:
        raise ValidationError(errors)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = ModelParams(**values)
    if params.eta_not_above_theta:
        warnings.warn(f"eta={params.eta} <= theta={params.theta}", stacklevel=2)
    return Config(params, ClaimMeasure(lam, severity), x0, t0)


def parse_quadrature(d: dict) -> QuadratureSettings:
    q = d.get("quadrature")
    if q is None:
        return DEFAULT_QUADRATURE
    return QuadratureSettings(
        tol=q.get("tol", DEFAULT_QUADRATURE.tol),
        max_depth=q.get("max_depth", DEFAULT_QUADRATURE.max_depth),
    )


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def load_config(path) -> Config:
    return parse_config(read_json(path))


def config_to_dict(params: ModelParams, measure: ClaimMeasure, x0: float = 0.0, t0: float = 0.0,
                   quadrature: QuadratureSettings | None = None) -> dict:
    d = {
        "market": {k: getattr(params, k) for k in SECTIONS["market"]},
        "insurance": {k: getattr(params, k) for k in SECTIONS["insurance"]},
        "preference": {k: getattr(params, k) for k in SECTIONS["preference"]},
        "claims": measure.to_dict(),
        "state": {"x0": x0, "t0": t0},
    }
    if quadrature is not None:
        d["quadrature"] = {"tol": quadrature.tol, "max_depth": quadrature.max_depth}
    return d


def write_config(path, params: ModelParams, measure: ClaimMeasure, x0: float = 0.0, t0: float = 0.0,
                 quadrature: QuadratureSettings | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config_to_dict(params, measure, x0, t0, quadrature), indent=2) + "\n")
    return path


def builtin_config_path(name: str) -> Path:
    """Path of a bundled config: ``example1`` or ``example2``."""
    ref = resources.files("mv_reinsure") / "data" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return Path(str(ref))
