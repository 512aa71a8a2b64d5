"""Experiment drivers. Each returns plain rows ready for emit_csv.

Run r of any experiment trains with seed run_seed(master_seed, r), so the
same seeds are shared across m, H and step sizes.
"""
import functools
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..analytic import solve_optimal
from ..errors import ConfigError, NoConvergentStepsize
from ..rng import run_seed
from ..trainers import CartpoleTask, LqrTask, TrainConfig, run_federated, run_independent
from .config import build_problem, cartpole_linear_problem, cartpole_setup, config_from_dict, config_to_dict

GRID_RATIO = 2.0 ** 0.25
WORKERS_ENV = "FEDLQR_WORKERS"
CURVE_HEADER = ["m", "iteration", "mean", "std", "runs"]
DIVERGED_HEADER = ["m", "run", "seed", "diverged_at"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not np.isfinite(v):
            return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
        return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")
    return str(v)


def emit_csv(header, rows, out=None):
    """Write header and rows as CSV (12 significant digits, positional notation).

    ``out`` is a path, a text stream, or None to return the text.
    """
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out is None:
        return text
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    return text


def workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# building tasks and running seeds
# ---------------------------------------------------------------------------

def cartpole_initial_gain(cfg, params, targets):
    if cfg.init_K is not None:
        return np.asarray(cfg.init_K, dtype=float).reshape(1, 4)
    opt, _ = solve_optimal(cartpole_linear_problem(params, targets), 0)
    return cfg.cartpole_init_scale * opt.K


def build_task(cfg, m):
    if cfg.problem == "cartpole":
        params, targets = cartpole_setup(cfg)
        if targets.shape[0] < m:
            raise ConfigError(f"field 'targets': need at least {m} rows", field="targets")
        targets = targets[:m]
        return CartpoleTask(params, targets, cartpole_initial_gain(cfg, params, targets),
                            x0_low=cfg.x0_range[0], x0_high=cfg.x0_range[1], eval_seed=cfg.master_seed)
    return LqrTask(build_problem(cfg, m), cfg.sampler)


@functools.lru_cache(maxsize=32)
def _cached_task(cfg_json, m):
    return build_task(config_from_dict(json.loads(cfg_json)), m)


def _train_one(cfg_json, m, eta, H, algorithm, run):
    cfg = config_from_dict(json.loads(cfg_json))
    task = _cached_task(cfg_json, m)
    tc = TrainConfig(T=cfg.T, H=H, eta=eta, r=cfg.r, estimator=cfg.estimator, seed=run_seed(cfg.master_seed, run),
                     init_K=None if cfg.problem == "cartpole" else cfg.init_K, sampler=cfg.sampler, eps=cfg.eps,
                     g_step_scale=cfg.g_step_scale)
    trainer = run_federated if algorithm == "federated" else run_independent
    return trainer(task, tc)


def run_batch(cfg, m, eta, H, algorithm=None, runs=None):
    """Train ``runs`` seeded runs; results come back in run order."""
    algorithm = algorithm or cfg.algorithm
    runs = cfg.runs if runs is None else runs
    cfg_json = json.dumps(config_to_dict(cfg), sort_keys=True)
    args = [(cfg_json, m, float(eta), H, algorithm, r) for r in range(runs)]
    nw = min(workers(), runs)
    if nw <= 1:
        return [_train_one(*a) for a in args]
    with ProcessPoolExecutor(max_workers=nw) as ex:
        return list(ex.map(_train_one, *zip(*args)))


def _success(trace):
    return trace.outcome == "converged"


def required_successes(cfg):
    """Exact count, e.g. 14 of 20 for p_min = 0.7 (small tolerance for float rounding)."""
    return int(np.ceil(cfg.p_min * cfg.runs - 1e-9))


# ---------------------------------------------------------------------------
# learning curves
# ---------------------------------------------------------------------------

def curve_rows(traces, m):
    """Row per iterate: iteration 0 is the starting policy, then 1..T."""
    ok = [t for t in traces if not t.diverged]
    rows = []
    T = traces[0].curve.shape[0]
    if ok:
        data = np.array([np.r_[t.initial, t.curve] for t in ok])
        mean, std = data.mean(axis=0), data.std(axis=0)
    else:
        mean = std = np.full(T + 1, np.nan)
    for it in range(T + 1):
        rows.append([m, it, mean[it], std[it], len(ok)])
    return rows


def diverged_rows(traces, m, master_seed):
    return [[m, r, run_seed(master_seed, r), t.diverged_at + 1] for r, t in enumerate(traces) if t.diverged]


def run_learning_curve(cfg):
    """Mean and std of the per-iteration gap (cost for cartpole) over the non-diverged runs.

    Returns (curve rows, diverged rows, traces by m).
    """
    rows, div, traces_by_m = [], [], {}
    for m in cfg.m:
        traces = run_batch(cfg, m, cfg.eta_for(m), cfg.H[0])
        traces_by_m[m] = traces
        rows += curve_rows(traces, m)
        div += diverged_rows(traces, m, cfg.master_seed)
    return rows, div, traces_by_m


# ---------------------------------------------------------------------------
# step-size sweep
# ---------------------------------------------------------------------------

def eta_grid(eta_lo, eta_hi):
    """Geometric grid eta_hi * 2^(-j/4), descending, down to eta_lo."""
    if eta_hi <= 0 or eta_lo <= 0 or eta_lo > eta_hi:
        raise ConfigError("field 'eta_lo': need 0 < eta_lo <= eta_hi", field="eta_lo")
    grid = []
    j = 0
    while True:
        eta = eta_hi * GRID_RATIO ** (-j)
        if eta < eta_lo * (1 - 1e-12):
            break
        grid.append(eta)
        j += 1
    return grid


@dataclass
class SweepPoint:
    algorithm: str
    m: int
    H: int
    max_eta: float = None
    success_rate: float = None
    median_iterations: float = None
    rates: dict = field(default_factory=dict)  # every evaluated eta -> success rate


SWEEP_HEADER = ["algorithm", "m", "H", "max_eta", "success_rate", "median_iterations"]


def median_iterations(traces, eps):
    its = [t.first_below(eps) for t in traces if _success(t)]
    return float(np.median(its)) if its else None


def sweep_point(cfg, m, H, algorithm=None):
    """Scan the grid from the top; stop at the first eta with enough successes."""
    algorithm = algorithm or cfg.algorithm
    point = SweepPoint(algorithm, m, H)
    need = required_successes(cfg)
    for eta in eta_grid(cfg.eta_lo, cfg.eta_hi):
        traces = run_batch(cfg, m, eta, H, algorithm)
        wins = sum(_success(t) for t in traces)
        point.rates[eta] = wins / cfg.runs
        if wins >= need:
            point.max_eta = eta
            point.success_rate = wins / cfg.runs
            point.median_iterations = median_iterations(traces, cfg.eps)
            break
    return point


def sweep_max_stepsize(cfg, strict=True):
    """Largest grid step size per (m, H) with success rate >= p_min.

    With ``strict`` a NoConvergentStepsize is raised after the sweep if any
    (m, H) never succeeded; the exception carries the results in ``.points``.
    """
    points = [sweep_point(cfg, m, H) for m in cfg.m for H in cfg.H]
    missing = [p for p in points if p.max_eta is None]
    if strict and missing:
        exc = NoConvergentStepsize(", ".join(f"m={p.m} H={p.H}" for p in missing) +
                                   f": no step size down to {cfg.eta_lo:g} reaches the success threshold")
        exc.points = points
        raise exc
    return points


def sweep_rows(points):
    return [[p.algorithm, p.m, p.H, p.max_eta, p.success_rate, p.median_iterations] for p in points]


# ---------------------------------------------------------------------------
# iterations to epsilon, success vs H
# ---------------------------------------------------------------------------

ITERS_HEADER = ["m", "eta", "median_iterations", "successes", "runs"]


def iterations_to_epsilon(cfg, etas=None):
    """Per m: median first iteration with gap <= eps over the successful runs.

    ``etas`` maps m to a step size; missing entries are found by a sweep at H[0].
    """
    rows = []
    for m in cfg.m:
        eta = None if etas is None else etas.get(m)
        if eta is None:
            point = sweep_point(cfg, m, cfg.H[0])
            if point.max_eta is None:
                raise NoConvergentStepsize(f"m={m}: no convergent step size")
            eta = point.max_eta
        traces = run_batch(cfg, m, eta, cfg.H[0])
        wins = sum(_success(t) for t in traces)
        rows.append([m, eta, median_iterations(traces, cfg.eps), wins, cfg.runs])
    return rows


H_HEADER = ["H", "eta", "success_rate", "successes", "runs"]


def convergence_probability_vs_H(cfg):
    m = cfg.m[0]
    eta = cfg.eta_for(m)
    rows = []
    for H in cfg.H:
        traces = run_batch(cfg, m, eta, H)
        wins = sum(_success(t) for t in traces)
        rows.append([H, eta, wins / cfg.runs, wins, cfg.runs])
    return rows


# ---------------------------------------------------------------------------
# cartpole
# ---------------------------------------------------------------------------

CARTPOLE_SUMMARY_HEADER = ["run", "seed", "initial_cost", "final_cost", "ratio"]


def cartpole_summary(traces, master_seed, head=10, tail=100):
    """Per run: mean cost over the first ``head`` and last ``tail`` iterations."""
    rows = []
    for r, t in enumerate(traces):
        if t.diverged:
            rows.append([r, run_seed(master_seed, r), None, None, None])
            continue
        first = float(np.mean(t.curve[:head]))
        last = float(np.mean(t.curve[-tail:]))
        rows.append([r, run_seed(master_seed, r), first, last, last / first])
    return rows


def run_cartpole(cfg):
    """Federated training on the cartpole; returns (curve rows, summary rows, traces)."""
    if cfg.problem != "cartpole":
        raise ConfigError("field 'problem': cartpole-train needs the cartpole preset", field="problem")
    m = cfg.m[0]
    traces = run_batch(cfg, m, cfg.eta_for(m), cfg.H[0])
    return curve_rows(traces, m), cartpole_summary(traces, cfg.master_seed), traces


def trace_rows(trace):
    rows = [[0, trace.initial, 1]]
    for it, v in enumerate(trace.curve, start=1):
        rows.append([it, None if np.isnan(v) else v, int(trace.stable[it - 1].all())])
    return rows


def csv_text(header, rows):
    buf = io.StringIO()
    emit_csv(header, rows, buf)
    return buf.getvalue()
