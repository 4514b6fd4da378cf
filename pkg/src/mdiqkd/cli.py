"""Command-line front end: ``mdiqkd {analyze,simulate,optimize,curve,align}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __doc__ as _pkg_doc
from .align import AlignmentState, inject_drift, run_alignment
from .core import SystemParams
from .decoy import FluctuationConfig, FluctuationModel
from .io import RunConfig, emit_counts, fmt_float, load_config, parse_counts, write_csv
from .keyrate import analyze
from .optimize import NoPositiveRate, optimize, rate_curve
from .system import expected_counts, expected_gains, simulate_counts

PARAM_COLUMNS = ["s", "mu", "nu", "p_s", "p_mu", "p_nu"]


class UsageError(ValueError):
    """The config lacks something the chosen command needs."""


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"config is missing {', '.join(missing)}")


def _output(cfg: RunConfig, args, default: str) -> Path:
    if args.output:
        return Path(args.output)
    return cfg.output or Path(default)


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    fl = cfg.fluctuation
    if args.epsilon is not None:
        fl = FluctuationConfig(args.epsilon, fl.model)
    if args.asymptotic:
        fl = FluctuationConfig(fl.epsilon, FluctuationModel.NONE)
    seed = cfg.seed if args.seed is None else args.seed
    return replace(cfg, fluctuation=fl, seed=seed)


def _rate_row(result) -> list:
    b = result.bounds
    return [result.rate_bps, result.rate_per_pulse, b.y11_lower, b.e11_upper,
            result.q_ss, result.e_ss, result.clamped]


_RATE_HEADER = ["rate_bps", "rate_per_pulse", "y11_lower", "e11_upper", "q_ss", "e_ss", "clamped"]


def cmd_analyze(args, cfg: RunConfig) -> None:
    _require(cfg, "protocol")
    obs = parse_counts(args.counts)
    res = analyze(obs, cfg.protocol, cfg.system, cfg.fluctuation)
    out = _output(cfg, args, "analyze.csv")
    write_csv(out, _RATE_HEADER, [_rate_row(res)])
    print(f"y11_lower  {res.bounds.y11_lower:.6g}")
    print(f"e11_upper  {res.bounds.e11_upper:.6g}")
    print(f"q_ss       {res.q_ss:.6g}")
    print(f"e_ss       {res.e_ss:.6g}")
    print(f"key rate   {res.rate_bps:.6g} bps ({res.rate_per_pulse:.6g} per pulse)")
    if res.clamped:
        print("warning: key rate clamped at zero", file=sys.stderr)


def cmd_simulate(args, cfg: RunConfig) -> None:
    _require(cfg, "protocol", "channel", "n_pairs")
    gains = expected_gains(cfg.system, cfg.protocol, cfg.channel)
    obs = simulate_counts(cfg.system, cfg.protocol, cfg.channel, int(cfg.n_pairs), cfg.seed, gains)
    out = _output(cfg, args, "simulated.counts")
    out.write_text(emit_counts(obs), encoding="utf-8")
    gain_csv = out.with_suffix(".gains.csv")
    write_csv(gain_csv, ["class", "gain", "error_gain"],
              [[k, g.gain, g.error_gain] for k, g in gains.classes.items()])
    for label, c in obs.classes.items():
        err = "" if c.errors is None else f"  errors {c.errors}"
        print(f"{label:>5}  total {c.total}{err}")
    print(f"counts written to {out}, gain table to {gain_csv}")


def cmd_optimize(args, cfg: RunConfig) -> None:
    _require(cfg, "channel", "n_pairs")
    out = _output(cfg, args, "optimize.csv")
    header = ["loss_db"] + PARAM_COLUMNS + _RATE_HEADER + ["asymptotic_bps"]
    try:
        res = optimize(cfg.system, cfg.channel, cfg.n_pairs, cfg.fluctuation,
                       seed=cfg.seed, n_restarts=cfg.n_restarts)
    except NoPositiveRate as exc:
        print(f"warning: NoPositiveRate: {exc}", file=sys.stderr)
        write_csv(out, header, [[cfg.channel.total_db] + [None] * 6 + [0.0, 0.0] + [None] * 5 + [0.0]])
        return
    # rate of the same settings with infinitely many pulses
    obs = expected_counts(cfg.system, res.best, cfg.channel, cfg.n_pairs)
    asym = analyze(obs, res.best, cfg.system, FluctuationConfig.asymptotic())
    write_csv(out, header, [[cfg.channel.total_db, *map(float, res.best.as_vector()),
                             *_rate_row(res.rate), asym.rate_bps]])
    print("optimal settings  " + "  ".join(f"{k}={fmt_float(v)}" for k, v in
                                          zip(PARAM_COLUMNS, map(float, res.best.as_vector()))))
    print(f"key rate          {res.rate.rate_bps:.6g} bps")
    print(f"asymptotic        {asym.rate_bps:.6g} bps at the same settings")
    print(f"evaluations       {res.evaluations} (converged: {res.converged})")


def cmd_curve(args, cfg: RunConfig) -> None:
    _require(cfg, "n_pairs")
    if not cfg.loss_grid:
        raise UsageError("config is missing run.loss_grid")
    points = rate_curve(cfg.system, list(cfg.loss_grid), cfg.n_pairs, cfg.fluctuation,
                        seed=cfg.seed, workers=cfg.workers, n_restarts=cfg.n_restarts)
    rows = []
    for p in points:
        params = list(map(float, p.params.as_vector())) if p.params else [None] * 6
        rows.append([p.loss_db, p.rate_bps, p.rate_per_pulse, *params])
        print(f"{p.loss_db:6.2f} dB  {p.rate_bps:.6g} bps")
        if p.params is None:
            print(f"warning: NoPositiveRate at {p.loss_db:g} dB", file=sys.stderr)
    write_csv(_output(cfg, args, "curve.csv"), ["loss_db", "rate_bps", "rate_per_pulse"] + PARAM_COLUMNS,
              rows)


def cmd_align(args, cfg: RunConfig) -> None:
    al = cfg.align
    system = SystemParams(misalignment=al.misalignment)
    rng = np.random.default_rng(cfg.seed)
    state = AlignmentState.random(rng, drift=al.drift)
    if al.drift_iterations:
        state = inject_drift(state, al.drift or 1e-3, al.drift_iterations, cfg.seed)
    rep = run_alignment(state, al.target_qber, al.max_iter, cfg.seed, system)
    steps = [s for s, n in rep.iterations.items() for _ in range(n)]
    write_csv(_output(cfg, args, "align.csv"), ["iteration", "step", "objective"],
              [[i, s, v] for i, (s, v) in enumerate(zip(steps, rep.trace))])
    for step, n in rep.iterations.items():
        print(f"step {step}: {n} iterations")
    print(f"qber_z {rep.qber_z:.6g}  qber_x {rep.qber_x:.6g}  converged {rep.converged}")
    if not rep.converged:
        print("warning: NotConverged: iteration budget exhausted", file=sys.stderr)


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "optimize": cmd_optimize,
            "curve": cmd_curve, "align": cmd_align}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdiqkd", description=_pkg_doc)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--epsilon", type=float, help="override the failure probability")
    common.add_argument("--asymptotic", action="store_true", help="ignore statistical fluctuations")
    common.add_argument("--output", help="override run.output")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", parents=[common], help="decoy bounds and key rate of a counts file")
    p.add_argument("counts")
    p.add_argument("config")
    for name, text in (("simulate", "sample class counts"), ("optimize", "optimize the protocol settings"),
                       ("curve", "optimized rate against loss"), ("align", "polarization alignment run")):
        sub.add_parser(name, parents=[common], help=text).add_argument("config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, KeyError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
