"""Command line entry point: ``fedlqr <subcommand> [--config FILE] [flags]``.

Flags override the matching config fields. CSV goes to --output (or the
config's ``output``), else stdout.
"""
import argparse
import sys

import numpy as np

from ..analytic import optimal_cost, solve_optimal
from ..errors import ConfigError, FedLQRError, NoConvergentStepsize
from ..lqr import InitSampler
from ..rng import run_seed
from ..trainers import TrainConfig, run_federated, run_independent
from . import experiments as ex
from .config import ExperimentConfig, build_problem, config_from_dict, config_to_dict, load_config

SUBCOMMANDS = ("solve", "train", "curve", "sweep-eta", "sweep-h", "iters", "cartpole-train")


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _float_list(text):
    vals = [float(v) for v in text.split(",") if v]
    return vals[0] if len(vals) == 1 else vals


OVERRIDES = [
    ("--problem", "problem", str),
    ("--m", "m", _int_list),
    ("--H", "H", _int_list),
    ("--eta", "eta", _float_list),
    ("--eta-lo", "eta_lo", float),
    ("--eta-hi", "eta_hi", float),
    ("--r", "r", float),
    ("--T", "T", int),
    ("--runs", "runs", int),
    ("--eps", "eps", float),
    ("--p-min", "p_min", float),
    ("--seed", "master_seed", int),
    ("--estimator", "estimator", str),
    ("--algorithm", "algorithm", str),
    ("--sampler", "sampler", str),
    ("--target-scale", "target_scale", float),
    ("--output", "output", str),
]


def build_parser():
    parser = argparse.ArgumentParser(prog="fedlqr", description="Federated zeroth-order LQR tracking experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        for flag, dest, typ in OVERRIDES:
            p.add_argument(flag, dest=dest, type=typ, default=None)
    return parser


def resolve_config(args, command):
    base = load_config(args.config) if args.config else ExperimentConfig(
        problem="cartpole" if command == "cartpole-train" else "coupled3x3",
        **(CARTPOLE_DEFAULTS if command == "cartpole-train" else {}))
    data = config_to_dict(base)
    for _, dest, _ in OVERRIDES:
        val = getattr(args, dest)
        if val is not None:
            data[dest] = val
    return config_from_dict(data)


# settings the cartpole run uses when no config file is given
CARTPOLE_DEFAULTS = {"m": [5], "eta": 3e-3, "r": 5e-2, "T": 500, "runs": 10, "sampler": "gaussian"}


def _write(cfg, header, rows, suffix=None):
    if cfg.output:
        path = cfg.output if suffix is None else cfg.output + suffix
        ex.emit_csv(header, rows, path)
    elif suffix is None:
        ex.emit_csv(header, rows, sys.stdout)


def cmd_solve(cfg):
    prob = build_problem(cfg)
    rows = []
    sampler = InitSampler(cfg.sampler)
    for i in range(prob.m):
        pol, _ = solve_optimal(prob, i)
        if i == 0:
            rows += [["K", "", a, b, pol.K[a, b]] for a in range(prob.k) for b in range(prob.n)]
        rows += [["g", i, a, "", pol.g[a]] for a in range(prob.k)]
        rows.append(["J", i, "", "", optimal_cost(prob, i, sampler)])
    _write(cfg, ["quantity", "agent", "row", "col", "value"], rows)


def cmd_train(cfg):
    m = cfg.m[0]
    task = ex.build_task(cfg, m)
    tc = TrainConfig(T=cfg.T, H=cfg.H[0], eta=cfg.eta_for(m), r=cfg.r, estimator=cfg.estimator,
                     seed=run_seed(cfg.master_seed, 0), init_K=None if cfg.problem == "cartpole" else cfg.init_K,
                     sampler=cfg.sampler, eps=cfg.eps, g_step_scale=cfg.g_step_scale)
    trace = (run_federated if cfg.algorithm == "federated" else run_independent)(task, tc)
    _write(cfg, ["iteration", trace.metric, "all_stable"], ex.trace_rows(trace))
    print(f"outcome: {trace.outcome}", file=sys.stderr)


def cmd_curve(cfg):
    rows, div, _ = ex.run_learning_curve(cfg)
    _write(cfg, ex.CURVE_HEADER, rows)
    _write(cfg, ex.DIVERGED_HEADER, div, ".diverged.csv")


def cmd_sweep_eta(cfg):
    try:
        points = ex.sweep_max_stepsize(cfg)
    except NoConvergentStepsize as exc:
        _write(cfg, ex.SWEEP_HEADER, ex.sweep_rows(exc.points))
        raise
    _write(cfg, ex.SWEEP_HEADER, ex.sweep_rows(points))


def cmd_sweep_h(cfg):
    _write(cfg, ex.H_HEADER, ex.convergence_probability_vs_H(cfg))


def cmd_iters(cfg):
    _write(cfg, ex.ITERS_HEADER, ex.iterations_to_epsilon(cfg))


def cmd_cartpole(cfg):
    rows, summary, _ = ex.run_cartpole(cfg)
    _write(cfg, ex.CURVE_HEADER, rows)
    _write(cfg, ex.CARTPOLE_SUMMARY_HEADER, summary, ".summary.csv")
    ratios = [r[-1] for r in summary if r[-1] is not None]
    if ratios:
        print(f"median final/initial cost ratio: {np.median(ratios):.4f}", file=sys.stderr)


COMMANDS = {"solve": cmd_solve, "train": cmd_train, "curve": cmd_curve, "sweep-eta": cmd_sweep_eta,
            "sweep-h": cmd_sweep_h, "iters": cmd_iters, "cartpole-train": cmd_cartpole}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args, args.command)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoConvergentStepsize as exc:
        print(f"no convergent step size: {exc}", file=sys.stderr)
        return 3
    except FedLQRError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
