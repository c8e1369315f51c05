"""Monte Carlo simulation of the controlled surplus.

The engine evolves the discounted surplus ``D_s = exp(r (T - s)) X_s``, whose
dynamics carry no ``X``-dependence:

    dD = e^{r(T-s)} [(mu - r) pi + int ((theta - eta) z + (1 + eta) l) nu(dz)] ds
         + e^{r(T-s)} sigma(pi) dB - e^{r(T-s)} sum_jumps l(Z, tau).

Drift and diffusion use Euler steps with left-endpoint coefficients (the
compensator ``int l nu`` sits in the drift). Claims arrive as a compound
Poisson stream at exact times and each reduces ``D`` by
``e^{r(T-tau)} l(Z, tau)``, which is a jump placed at its exact time with the
surplus growing at rate ``r`` afterwards. ``X_T = D_T`` and the linear ``rX``
part of the drift is integrated exactly.

Since every term is additive, the change in ``X_T`` caused by altering the
strategy on a window ``[a, b)`` depends only on the random numbers in that
window. :func:`perturbation_test` relies on this to evaluate spike
perturbations under common random numbers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .equilibrium import (
    equilibrium_investment,
    equilibrium_retention,
    equilibrium_strategy,
    strategy_objective,
)
from .model import ClaimMeasure, ExcessLoss, Full, ModelParams, Proportional, Retention, Strategy, constant

CHUNK = 8192
BLOWUP = 1e12
THREADS_ENV = "MV_REINSURE_THREADS"


class SimulationBlowUp(OverflowError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    steps_per_unit_time: int = 200
    seed: int = 0
    x0: float = 0.0
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.steps_per_unit_time < 1:
            raise ValueError("steps_per_unit_time must be >= 1")
        if self.t0 < 0:
            raise ValueError("t0 must be >= 0")

    def grid(self, T: float) -> tuple[int, float]:
        if not self.t0 < T:
            raise ValueError(f"t0={self.t0} must lie in [0, T={T})")
        n = max(1, math.ceil((T - self.t0) * self.steps_per_unit_time - 1e-9))
        return n, (T - self.t0) / n


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    objective_J: float
    se_J: float
    n_paths: int

    def to_record(self, seed: int | None = None) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "se_mean": self.se_mean,
            "se_variance": self.se_variance,
            "J": self.objective_J,
            "se_J": self.se_J,
            "n_paths": self.n_paths,
            "seed": seed,
        }


def estimate_objective(samples: Sequence[float], gamma: float) -> MCEstimate:
    """Mean, unbiased variance and ``J = mean - gamma/2 variance`` with errors.

    The variance error uses the fourth central moment (delta method). ``se_J``
    treats the mean and variance estimators as independent, which is only a
    first-order approximation.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = float(np.mean(x))
    dev = x - mean
    var = float(np.sum(dev * dev) / (n - 1))
    m4 = float(np.mean(dev**4))
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    se_J = math.hypot(se_mean, 0.5 * gamma * se_var)
    return MCEstimate(mean, var, se_mean, se_var, mean - 0.5 * gamma * var, se_J, n)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


def _workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, workers)


def _step_range(cfg: SimConfig, T: float, start: float, end: float) -> tuple[int, int]:
    n, dt = cfg.grid(T)
    lo = math.ceil((start - cfg.t0) / dt - 1e-9)
    hi = math.ceil((end - cfg.t0) / dt - 1e-9)
    return max(lo, 0), min(hi, n)


def step_time(cfg: SimConfig, T: float, k: int) -> float:
    """Left endpoint of step ``k``; perturbation windows must use these exact floats."""
    _, dt = cfg.grid(T)
    return cfg.t0 + k * dt


def _step_coefficients(strategy: Strategy, p: ModelParams, cm: ClaimMeasure,
                       cfg: SimConfig, k0: int, k1: int) -> tuple[np.ndarray, np.ndarray]:
    _, dt = cfg.grid(p.T)
    drift = np.empty(k1 - k0)
    noise = np.empty(k1 - k0)
    for i, k in enumerate(range(k0, k1)):
        t = step_time(cfg, p.T, k)
        pi = float(strategy.investment(t))
        l1, _ = strategy.retention.moments(cm, t)
        a = (p.mu - p.r) * pi + (p.theta - p.eta) * cm.mean() + (1.0 + p.eta) * l1
        s2 = p.sigma1**2 + 2 * p.rho * p.sigma1 * p.sigma2 * pi + (p.sigma2 * pi) ** 2
        w = math.exp(p.r * (p.T - t))
        drift[i] = w * a * dt
        noise[i] = w * math.sqrt(max(s2, 0.0) * dt)
    return drift, noise


def _claims(cfg: SimConfig, p: ModelParams, cm: ClaimMeasure, paths: np.ndarray):
    """All claims on ``[t0, T)`` for ``paths``: (local path index, time, size).

    Sorted by path then arrival order.
    """
    if cm.intensity == 0:
        empty = np.empty(0)
        return empty.astype(np.int64), empty, empty
    k_arr = rng.path_keys(cfg.seed, paths, rng.ARRIVAL)
    k_sev = rng.path_keys(cfg.seed, paths, rng.SEVERITY)
    local = np.arange(paths.size)
    clock = np.full(paths.size, float(cfg.t0))
    idx, times, sizes = [], [], []
    j = 0
    while local.size:
        u = rng.uniforms(k_arr[local], j)
        clock[local] = clock[local] - np.log(u) / cm.intensity
        alive = clock[local] < p.T
        local = local[alive]
        if local.size:
            idx.append(local)
            times.append(clock[local])
            sizes.append(cm.severity.quantile(rng.uniforms(k_sev[local], j)))
        j += 1
    if not idx:
        empty = np.empty(0)
        return empty.astype(np.int64), empty, empty
    idx_a, t_a, z_a = np.concatenate(idx), np.concatenate(times), np.concatenate(sizes)
    order = np.argsort(idx_a, kind="stable")
    return idx_a[order], t_a[order], z_a[order]


def _chunk_windows(strategies, p, cm, cfg, paths, windows):
    """Contributions to ``X_T`` of each (strategy, window) pair for one chunk."""
    keys = rng.path_keys(cfg.seed, paths, rng.BROWNIAN)
    c_idx, c_t, c_z = _claims(cfg, p, cm, paths)
    shared = len(strategies) > 1 and len(set(windows)) < len(windows)
    cache: dict[int, np.ndarray] = {}

    def normals(k: int) -> np.ndarray:
        if not shared:
            return rng.normals(keys, k)
        if k not in cache:
            cache[k] = rng.normals(keys, k)
        return cache[k]

    out = []
    for strategy, (k0, k1) in zip(strategies, windows):
        drift, noise = _step_coefficients(strategy, p, cm, cfg, k0, k1)
        acc = np.zeros(paths.size)
        for i, k in enumerate(range(k0, k1)):
            acc += drift[i] + noise[i] * normals(k)
        n_steps, _ = cfg.grid(p.T)
        a = step_time(cfg, p.T, k0)
        b = math.inf if k1 >= n_steps else step_time(cfg, p.T, k1)
        sel = (c_t >= a) & (c_t < b)
        if np.any(sel):
            tau = c_t[sel]
            loss = np.exp(p.r * (p.T - tau)) * strategy.retention.retained(c_z[sel], tau)
            np.subtract.at(acc, c_idx[sel], loss)
        out.append(acc)
    return out


def _run(strategies, p, cm, cfg, windows, workers=None) -> list[np.ndarray]:
    chunks = [np.arange(s, min(s + CHUNK, cfg.n_paths), dtype=np.int64)
              for s in range(0, cfg.n_paths, CHUNK)]
    n_workers = min(_workers(workers), len(chunks))

    def task(paths):
        return _chunk_windows(strategies, p, cm, cfg, paths, windows)

    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(task, chunks))
    else:
        parts = [task(c) for c in chunks]
    return [np.concatenate([part[i] for part in parts]) for i in range(len(strategies))]


def _check_admissible(strategy: Strategy, p: ModelParams) -> None:
    if abs(strategy.horizon - p.T) > 1e-12:
        raise ValueError("strategy horizon does not match the model horizon")
    probe_t = np.linspace(0.0, p.T, 11)
    probe_z = np.array([0.0, 0.5, 1.0, 5.0, 50.0])
    zz, tt = np.meshgrid(probe_z, probe_t)
    ell = np.asarray(strategy.retention.retained(zz, tt))
    if np.any(ell < -1e-12) or np.any(ell > zz + 1e-12):
        raise ValueError("strategy retention violates 0 <= l(z, t) <= z")


def simulate_terminal(cfg: SimConfig, strategy: Strategy, p: ModelParams, cm: ClaimMeasure,
                      workers: int | None = None) -> np.ndarray:
    """Terminal surplus ``X_T`` on ``cfg.n_paths`` paths, deterministic in ``cfg.seed``."""
    _check_admissible(strategy, p)
    n, _ = cfg.grid(p.T)
    (contrib,) = _run([strategy], p, cm, cfg, [(0, n)], workers)
    x_T = math.exp(p.r * (p.T - cfg.t0)) * cfg.x0 + contrib
    if not np.all(np.abs(x_T) < BLOWUP):
        raise SimulationBlowUp(f"|X_T| exceeded {BLOWUP:g}; check the configuration scaling")
    return x_T


def simulate_discounted(cfg: SimConfig, strategy: Strategy, p: ModelParams, cm: ClaimMeasure,
                        record_times: Sequence[float], workers: int | None = None) -> np.ndarray:
    """``exp(r (T - t)) X_t`` at ``record_times`` (snapped to the step grid).

    Returns an array of shape ``(len(record_times), n_paths)``.
    """
    _check_admissible(strategy, p)
    ks = [_step_range(cfg, p.T, cfg.t0, float(t))[1] for t in record_times]
    bounds = [0] + ks
    windows = [(min(a, b), b) for a, b in zip(bounds[:-1], bounds[1:])]
    parts = _run([strategy] * len(windows), p, cm, cfg, windows, workers)
    d0 = math.exp(p.r * (p.T - cfg.t0)) * cfg.x0
    return d0 + np.cumsum(np.vstack(parts), axis=0)


# ---------------------------------------------------------------------------
# Spike perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    name: str
    retention: Retention
    pi_bar: float
    strictly_suboptimal: bool = True
    # True: the perturbation is u* itself on the window
    identity: bool = False


def perturbation_library(t: float, p: ModelParams, cm: ClaimMeasure) -> list[Perturbation]:
    """Full and zero retention, quota shares 0.25/0.5/0.75, constant deductibles
    m*/2 and 2m*, and investment 0 and pi* +- 1 with the equilibrium retention.
    Every deviation uses ``pi*(t)`` unless it varies the investment.
    """
    m = float(equilibrium_retention(p).deductible(t))
    pi = float(equilibrium_investment(t, p))
    lib = [
        Perturbation("full_retention", Full(), pi),
        Perturbation("zero_retention", Proportional(constant(0.0)), pi),
    ]
    lib += [Perturbation(f"proportional_{q}", Proportional(constant(q)), pi) for q in (0.25, 0.5, 0.75)]
    lib += [
        Perturbation("deductible_half", ExcessLoss(constant(0.5 * m)), pi),
        Perturbation("deductible_double", ExcessLoss(constant(2.0 * m)), pi),
    ]
    ret = equilibrium_retention(p)
    lib += [
        Perturbation("invest_zero", ret, 0.0, strictly_suboptimal=pi != 0.0),
        Perturbation("invest_plus_one", ret, pi + 1.0),
        Perturbation("invest_minus_one", ret, pi - 1.0),
    ]
    return lib


@dataclass
class PerturbationRow:
    name: str
    eps: float
    ratio: float
    se: float
    analytic_ratio: float
    passed: bool


@dataclass
class PerturbationReport:
    x: float
    t: float
    n_paths: int
    seed: int
    J_star: float
    rows: list[PerturbationRow] = field(default_factory=list)
    # per perturbation: smallest-eps ratio > 3 SE (None when not strictly suboptimal)
    strictly_positive: dict[str, bool | None] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(
            v is not False for v in self.strictly_positive.values()
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _influence(x: np.ndarray, gamma: float) -> np.ndarray:
    dev = x - x.mean()
    return x - 0.5 * gamma * dev * dev


def perturbation_test(
    x: float,
    t: float,
    eps_list: Sequence[float],
    perturbations: Sequence[Perturbation],
    cfg: SimConfig,
    p: ModelParams,
    cm: ClaimMeasure,
    workers: int | None = None,
    n_sigma: float = 3.0,
) -> PerturbationReport:
    """Estimate ``(J^{u*}(x, t) - J^{u^{eps,t}}(x, t)) / eps`` under common random numbers.

    ``cfg.x0`` and ``cfg.t0`` are replaced by ``x`` and ``t``. Each ``eps`` must
    be a whole number of Euler steps. The standard error of each difference
    comes from the paired influence functions ``X - gamma/2 (X - mean)**2``.
    """
    cfg = SimConfig(cfg.n_paths, cfg.steps_per_unit_time, cfg.seed, x, t)
    n, dt = cfg.grid(p.T)
    eps_sorted = sorted(float(e) for e in eps_list)
    if not eps_sorted or eps_sorted[0] <= 0:
        raise ValueError("eps values must be positive")
    if t + eps_sorted[-1] > p.T + 1e-12:
        raise ValueError(f"t + max(eps) = {t + eps_sorted[-1]} exceeds T = {p.T}")
    steps = []
    for e in eps_list:
        k = e / dt
        if abs(k - round(k)) > 1e-6 or round(k) < 1:
            raise ValueError(f"eps={e} is not a whole number of steps of size {dt}")
        steps.append(int(round(k)))

    star = equilibrium_strategy(p)
    x_star = simulate_terminal(cfg, star, p, cm, workers)
    J_star = estimate_objective(x_star, p.gamma).objective_J
    psi_star = _influence(x_star, p.gamma)
    J_star_exact = strategy_objective(star, x, t, p, cm)

    report = PerturbationReport(x, t, cfg.n_paths, cfg.seed, J_star)
    rows: dict[tuple[str, float], PerturbationRow] = {}
    for e, k in zip(eps_list, steps):
        end = step_time(cfg, p.T, k)
        spiked = [
            star if pert.identity else star.spiked(pert.retention, pert.pi_bar, t, end)
            for pert in perturbations
        ]
        base_c, *pert_cs = _run([star] + spiked, p, cm, cfg, [(0, k)] * (1 + len(spiked)), workers)
        for pert, strat, pert_c in zip(perturbations, spiked, pert_cs):
            x_pert = x_star + (pert_c - base_c)
            J_pert = estimate_objective(x_pert, p.gamma).objective_J
            diff = _influence(x_pert, p.gamma) - psi_star
            se = float(np.std(diff, ddof=1) / math.sqrt(cfg.n_paths)) / e
            ratio = (J_star - J_pert) / e
            exact = (J_star_exact - strategy_objective(strat, x, t, p, cm, breakpoints=(end,))) / e
            rows[(pert.name, e)] = PerturbationRow(pert.name, float(e), ratio, se, exact,
                                                   ratio >= -n_sigma * se)
    for pert in perturbations:
        report.rows.extend(rows[(pert.name, e)] for e in eps_list)
        smallest = rows[(pert.name, eps_sorted[0])]
        report.strictly_positive[pert.name] = (
            smallest.ratio > n_sigma * smallest.se if pert.strictly_suboptimal else None
        )
    return report


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_samples(samples: np.ndarray, path, fmt: str = "binary") -> None:
    """Dump samples as little-endian float64 (``binary``) or one-column CSV."""
    arr = np.asarray(samples, dtype="<f8")
    if fmt == "binary":
        arr.tofile(path)
    elif fmt == "csv":
        np.savetxt(path, arr, fmt="%.17g", header="X_T", comments="")
    else:
        raise ValueError(f"unknown sample format {fmt!r}")


def read_samples(path, fmt: str = "binary") -> np.ndarray:
    if fmt == "binary":
        return np.fromfile(path, dtype="<f8")
    return np.loadtxt(path, skiprows=1, ndmin=1)
