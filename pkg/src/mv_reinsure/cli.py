"""Command-line front end: ``mv-reinsure {eval,table,simulate,verify,perturb,compare}``.

Every output embeds the resolved configuration and command arguments. JSON
output has the shape ``{"params": ..., "command": ..., "rows": [...]}``. CSV
output starts with one ``#`` comment line that holds the same metadata as
compact JSON.

Exit codes: 0 success, 1 verification failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import compare as cmp
from .config import (
    ConfigError,
    builtin_config_path,
    config_to_dict,
    parse_config,
    parse_quadrature,
    read_json,
)
from .equilibrium import (
    equilibrium_deductible,
    equilibrium_investment,
    equilibrium_strategy,
    equilibrium_value_functions,
    exponential_utility_rule,
    exponential_utility_strategy,
    proportional_equilibrium_strategy,
)
from .generator import verify_ehjb
from .model import PARAM_FIELDS, ExcessLoss, Full, Proportional, Strategy, ValidationError, constant
from .simulate import (
    SimConfig,
    estimate_objective,
    perturbation_library,
    perturbation_test,
    simulate_terminal,
    write_samples,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _vary(text: str) -> tuple[str, list[float]]:
    key, sep, values = text.partition("=")
    if not sep or key not in PARAM_FIELDS:
        raise argparse.ArgumentTypeError(
            f"expected KEY=v1,v2,... with KEY in {', '.join(PARAM_FIELDS)}; got {text!r}"
        )
    return key, _floats(values)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="config JSON path, or builtin:example1 / builtin:example2")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--seed", type=int, default=12345)

    parser = argparse.ArgumentParser(prog="mv-reinsure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="equilibrium strategy table")
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--vary", type=_vary, default=None, metavar="KEY=v1,v2,...")

    p = sub.add_parser("table", parents=[common], help="value-function table")
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--surplus", type=_floats, default=[0.0])
    p.add_argument("--tabulate", action="store_true", help="use 512-point interpolated intercepts")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo terminal-wealth estimate")
    p.add_argument("--strategy", default="equilibrium",
                   help="equilibrium | exponential_utility | proportional_equilibrium | full | "
                        "zero | deductible=M | proportional=Q")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps-per-unit", type=int, default=200)
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--dump", default=None, help="write terminal samples to this file")
    p.add_argument("--dump-format", choices=("binary", "csv"), default="binary")

    p = sub.add_parser("verify", parents=[common], help="extended-HJB certification")
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--surplus", type=_floats, default=[-5.0, 0.0, 5.0])

    p = sub.add_parser("perturb", parents=[common], help="spike-perturbation equilibrium test")
    p.add_argument("--eps", type=_floats, default=[0.5, 0.25, 0.1])
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps-per-unit", type=int, default=200)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--t", type=float, default=None)

    p = sub.add_parser("compare", parents=[common], help="excess-loss vs proportional table")
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--surplus", type=_floats, default=[0.0, 5.0, 10.0])
    return parser


def _load(spec: str) -> dict:
    if spec.startswith("builtin:"):
        return read_json(builtin_config_path(spec.split(":", 1)[1]))
    return read_json(spec)


def _strategy(name: str, params, measure) -> Strategy:
    pi = equilibrium_strategy(params).investment
    if name == "equilibrium":
        return equilibrium_strategy(params)
    if name == "exponential_utility":
        return exponential_utility_rule(params)
    if name == "proportional_equilibrium":
        return proportional_equilibrium_strategy(params, measure)
    if name == "full":
        return Strategy(Full(), pi, params.T, label=name)
    if name == "zero":
        return Strategy(Proportional(constant(0.0)), pi, params.T, label=name)
    kind, _, value = name.partition("=")
    try:
        level = float(value)
    except ValueError:
        level = None
    if kind == "deductible" and level is not None:
        return Strategy(ExcessLoss(constant(level)), pi, params.T, label=name)
    if kind == "proportional" and level is not None:
        return Strategy(Proportional(constant(level)), pi, params.T, label=name)
    raise ValidationError({"--strategy": f"unknown strategy {name!r}"})


def _default_times(T: float, n: int) -> list[float]:
    return [float(v) for v in np.linspace(0.0, T, n)]


# ---------------------------------------------------------------------------
# Commands: each returns (rows, extra metadata, passed)
# ---------------------------------------------------------------------------


def cmd_eval(args, cfg, raw, quad):
    p = cfg.params
    times = args.times if args.times is not None else _default_times(p.T, int(round(p.T)) + 1)
    sweeps = [(None, p)] if args.vary is None else [
        (v, p.replace(**{args.vary[0]: v})) for v in args.vary[1]
    ]
    rows = []
    for value, params in sweeps:
        for t in times:
            row: dict[str, Any] = {args.vary[0]: value} if args.vary else {}
            row.update(
                t=t,
                m_star=float(equilibrium_deductible(t, params)),
                pi_star=float(equilibrium_investment(t, params)),
                exp_utility_deductible=float(exponential_utility_strategy(t, params)[0]),
            )
            rows.append(row)
    return rows, {}, True


def cmd_table(args, cfg, raw, quad):
    p = cfg.params
    times = args.times if args.times is not None else _default_times(p.T, 10)
    vf = equilibrium_value_functions(p, cfg.measure, quad, tabulate=args.tabulate)
    rows = []
    for t in times:
        B, b = vf.B(t), vf.b(t)
        for x in args.surplus:
            rows.append({"t": t, "x": x, "B": B, "b": b, "V": vf.V(x, t), "g": vf.g(x, t),
                         "Var": vf.variance(x, t)})
    return rows, {}, True


def cmd_simulate(args, cfg, raw, quad):
    sim = SimConfig(
        n_paths=args.paths,
        steps_per_unit_time=args.steps_per_unit,
        seed=args.seed,
        x0=cfg.x0 if args.x0 is None else args.x0,
        t0=cfg.t0 if args.t0 is None else args.t0,
    )
    strategy = _strategy(args.strategy, cfg.params, cfg.measure)
    samples = simulate_terminal(sim, strategy, cfg.params, cfg.measure)
    if args.dump:
        write_samples(samples, args.dump, args.dump_format)
    est = estimate_objective(samples, cfg.params.gamma)
    extra = {"simulation": {"n_paths": sim.n_paths, "steps_per_unit_time": sim.steps_per_unit_time,
                            "seed": sim.seed, "x0": sim.x0, "t0": sim.t0, "strategy": args.strategy}}
    return [est.to_record(sim.seed)], extra, True


def cmd_verify(args, cfg, raw, quad):
    p = cfg.params
    times = args.times if args.times is not None else _default_times(p.T, 5)
    grid = [(x, t) for t in times for x in args.surplus]
    report = verify_ehjb(grid, p, cfg.measure, quad).to_dict()
    rows = report.pop("points")
    for row in rows:
        row["failures"] = ";".join(row["failures"])
    return rows, report, report["passed"]


def cmd_perturb(args, cfg, raw, quad):
    x = cfg.x0 if args.x is None else args.x
    t = cfg.t0 if args.t is None else args.t
    sim = SimConfig(args.paths, args.steps_per_unit, args.seed, x, t)
    report = perturbation_test(
        x, t, args.eps, perturbation_library(t, cfg.params, cfg.measure), sim, cfg.params, cfg.measure
    ).to_dict()
    rows = report.pop("rows")
    extra = {"passed": report["passed"], "strictly_positive": report["strictly_positive"],
             "J_star": report["J_star"], "n_paths": report["n_paths"], "seed": report["seed"]}
    return rows, extra, report["passed"]


def cmd_compare(args, cfg, raw, quad):
    spec = cmp.CramerLundbergSpec.from_model(cfg.params, cfg.measure)
    times = args.times if args.times is not None else [
        float(v) for v in np.arange(0.0, cfg.params.T + 1e-9, 0.5)
    ]
    grid = [(t, x) for t in times for x in args.surplus]
    rows = [dict(zip(cmp.CSV_HEADER, (r.t, r.x, r.V1, r.V2, r.g1, r.g2, r.Var1, r.Var2)))
            for r in cmp.dominance_table(grid, spec, quad)]
    return rows, {"V2_reconstructed": cmp.V2_RECONSTRUCTED}, True


COMMANDS = {
    "eval": (cmd_eval, "csv"),
    "table": (cmd_table, "csv"),
    "simulate": (cmd_simulate, "json"),
    "verify": (cmd_verify, "json"),
    "perturb": (cmd_perturb, "json"),
    "compare": (cmd_compare, "csv"),
}


def _command_echo(args) -> dict:
    skip = {"config", "out", "format", "command"}
    echo = {k: v for k, v in vars(args).items() if k not in skip}
    if echo.get("vary") is not None:
        echo["vary"] = {"key": args.vary[0], "values": args.vary[1]}
    return echo


def _cell(v: Any) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, float):
        return cmp.fmt12(v)
    return str(v)


def render(rows: Sequence[dict], meta: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({**meta, "rows": list(rows)}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, separators=(",", ":")) + "\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        header = list(rows[0].keys())
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(row.get(k)) for k in header])
    return buf.getvalue()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler, default_fmt = COMMANDS[args.command]
    fmt = args.format or default_fmt
    try:
        raw = _load(args.config)
        cfg = parse_config(raw)
        quad = parse_quadrature(raw)
        resolved = config_to_dict(cfg.params, cfg.measure, cfg.x0, cfg.t0,
                                  quad if "quadrature" in raw else None)
        rows, extra, passed = handler(args, cfg, raw, quad)
    except (ConfigError, ValidationError) as exc:
        print(f"mv-reinsure: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"params": resolved, "command": {"name": args.command, **_command_echo(args)}, **extra}
    text = render(rows, meta, fmt)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
