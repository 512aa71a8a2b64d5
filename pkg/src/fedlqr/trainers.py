"""Federated zeroth-order policy gradient and the independent-agent baseline.

Both trainers share one loop. Per iteration each agent i draws (x0, u) from
its own substream keyed by (seed, i, t), forms a gradient estimate for its
local policy (K_i, g_i), and steps. The federated trainer replaces every K_i
by the across-agent mean every H iterations; offsets g_i are never shared.

Costs are evaluated through a task object so the same loop drives the linear
problem (with an exact optimality gap as instrumentation) and the cartpole
(raw average cost).
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .analytic import average_optimal_cost, exact_gradient, solve_optimal
from .cartpole import batch_episode_costs, sample_initial_state as cartpole_x0
from .errors import DimensionMismatch, UnstablePolicy
from .lqr import InitSampler, Policy, is_stable, initial_moments, sample_initial_state
from .rng import substream
from .zeroth_order import sample_unit_sphere

ESTIMATORS = ("one_point", "two_point", "exact")
CAP_FACTOR = 10.0
DEFAULT_CONTRACTION = 0.9


@dataclass
class TrainConfig:
    T: int = 1000
    H: int = 1
    eta: float = 1e-4
    r: float = 1e-2
    estimator: str = "two_point"
    seed: int = 0
    init_K: np.ndarray = None  # None -> task default
    init_g: np.ndarray = None  # None -> zeros, one row per agent
    sampler: str = InitSampler.GAUSSIAN
    eps: float = 0.05
    g_step_scale: float = None  # None -> 1/m federated, 1 independent
    record_policies: bool = False

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")
        if int(self.H) < 1 or int(self.T) % int(self.H) != 0:
            raise ValueError("H must be >= 1 and divide T")
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        self.T, self.H = int(self.T), int(self.H)
        self.sampler = InitSampler(self.sampler)


@dataclass
class TrainTrace:
    curve: np.ndarray  # per-iteration metric, NaN after divergence
    stable: np.ndarray  # (T, m) per-agent stability flags
    final_K: np.ndarray  # (m, k, n)
    final_g: np.ndarray  # (m, k)
    outcome: str  # "converged", "completed" or "diverged"
    diverged_at: int = None
    metric: str = "gap"
    initial: float = float("nan")  # metric at the initial policies
    policies: np.ndarray = field(default=None, repr=False)  # (T, m, d) when recorded

    @property
    def diverged(self):
        return self.outcome == "diverged"

    @property
    def final(self):
        return float(self.curve[-1])

    def first_below(self, eps):
        """First iteration (1-based) whose metric is <= eps, or None."""
        hits = np.flatnonzero(self.curve <= eps)
        return int(hits[0]) + 1 if hits.size else None


def average_policies(Ks):
    """Entrywise mean of a nonempty list of equally shaped gain matrices."""
    if len(Ks) == 0:
        raise DimensionMismatch("cannot average an empty list")
    arrs = [np.asarray(K, dtype=float) for K in Ks]
    shape = arrs[0].shape
    for a in arrs:
        if a.shape != shape:
            raise DimensionMismatch(f"gain shapes differ: {shape} vs {a.shape}")
    return np.mean(np.stack(arrs), axis=0)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

class LqrTask:
    """Linear tracking problem; reports the exact average optimality gap."""

    metric = "gap"

    def __init__(self, prob, sampler=InitSampler.GAUSSIAN):
        self.prob = prob
        self.sampler = InitSampler(sampler)
        self.n, self.k, self.m = prob.n, prob.k, prob.m
        self.S0, self.mu0 = initial_moments(prob, self.sampler)
        self.j_star = average_optimal_cost(prob, self.sampler)

    def default_K0(self):
        opt, _ = solve_optimal(self.prob, 0)
        K0 = DEFAULT_CONTRACTION * opt.K
        if not is_stable(self.prob, K0):
            raise UnstablePolicy("0.9 K* is not stabilizing; pass init_K explicitly")
        return K0

    def check_initial(self, K0):
        if not is_stable(self.prob, K0):
            raise UnstablePolicy("initial gain is not stabilizing")

    def draw_x0(self, rng):
        return sample_initial_state(self.prob, self.sampler, rng)

    def _value(self, Ks, gs, agents):
        p = self.prob
        return _kernels.batch_value_params(p.A, p.B, p.Q, p.R, p.gamma,
                                           np.ascontiguousarray(p.targets[agents]),
                                           np.ascontiguousarray(Ks), np.ascontiguousarray(gs),
                                           _kernels.FIXED_POINT_TOL, _kernels.FIXED_POINT_MAX_ITER)

    def sample_costs(self, Ks, gs, agents, x0s):
        """Exact per-sample costs; ok is False where the policy is unstable."""
        P, q, r, status = self._value(Ks, gs, agents)
        costs = np.einsum("pi,pij,pj->p", x0s, P, x0s) + 2.0 * np.einsum("pi,pi->p", x0s, q) + r
        ok = status == _kernels.OK
        return np.where(ok, costs, np.inf), ok

    def expected_costs(self, Ks, gs):
        P, q, r, status = self._value(Ks, gs, np.arange(self.m))
        costs = np.einsum("pij,ij->p", P, self.S0) + 2.0 * q @ self.mu0 + r
        ok = status == _kernels.OK
        return np.where(ok, costs, np.inf), ok

    def evaluate(self, Ks, gs):
        costs, ok = self.expected_costs(Ks, gs)
        return float(np.mean(costs) - self.j_star), ok

    def exact_grads(self, Ks, gs):
        out = np.empty((self.m, self.n * self.k + self.k))
        for i in range(self.m):
            out[i] = exact_gradient(self.prob, i, Policy(Ks[i], gs[i]), self.sampler).flat()
        return out


class CartpoleTask:
    """Nonlinear cartpole; reports the average episode cost (no optimum is known)."""

    metric = "cost"

    def __init__(self, params, targets, init_K, x0_low=-0.05, x0_high=0.05, eval_seed=0, eval_draws=8):
        self.params = params
        self.targets = np.ascontiguousarray(targets, dtype=float)
        self.n, self.k, self.m = 4, 1, self.targets.shape[0]
        self._K0 = np.asarray(init_K, dtype=float).reshape(1, 4)
        self.low, self.high = x0_low, x0_high
        # a fixed batch of start states keeps the reported curve free of x0 noise
        rng = substream(eval_seed, 1 << 20)
        self.eval_x0 = np.stack([cartpole_x0(rng, x0_low, x0_high) for _ in range(eval_draws)])

    def default_K0(self):
        return self._K0.copy()

    def check_initial(self, K0):
        pass

    def draw_x0(self, rng):
        return cartpole_x0(rng, self.low, self.high)

    def sample_costs(self, Ks, gs, agents, x0s):
        costs, ok = batch_episode_costs(self.params, self.targets[agents], Ks, gs, x0s)
        return np.where(ok, costs, np.inf), ok

    def expected_costs(self, Ks, gs):
        e = self.eval_x0.shape[0]
        agents = np.repeat(np.arange(self.m), e)
        costs, ok = self.sample_costs(np.repeat(Ks, e, axis=0), np.repeat(gs, e, axis=0), agents,
                                      np.tile(self.eval_x0, (self.m, 1)))
        costs = costs.reshape(self.m, e).mean(axis=1)
        ok = ok.reshape(self.m, e).all(axis=1)
        return costs, ok

    def evaluate(self, Ks, gs):
        costs, ok = self.expected_costs(Ks, gs)
        return float(np.mean(costs)), ok

    def exact_grads(self, Ks, gs):
        raise ValueError("the cartpole task has no exact gradient")


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _as_task(obj, cfg):
    if hasattr(obj, "evaluate"):
        return obj
    return LqrTask(obj, cfg.sampler)


def _initial_policies(task, cfg):
    K0 = task.default_K0() if cfg.init_K is None else np.asarray(cfg.init_K, dtype=float)
    if K0.shape != (task.k, task.n):
        raise DimensionMismatch(f"init_K must have shape {(task.k, task.n)}")
    task.check_initial(K0)
    if cfg.init_g is None:
        g0 = np.zeros((task.m, task.k))
    else:
        g0 = np.asarray(cfg.init_g, dtype=float).reshape(-1, task.k)
        if g0.shape[0] == 1:
            g0 = np.repeat(g0, task.m, axis=0)
        if g0.shape != (task.m, task.k):
            raise DimensionMismatch(f"init_g must have {task.m} rows of length {task.k}")
    return np.repeat(K0[None], task.m, axis=0), g0.copy()


def _train(task, cfg, federated):
    m, n, k = task.m, task.n, task.k
    nk = n * k
    d = nk + k
    Ks, gs = _initial_policies(task, cfg)
    g_scale = cfg.g_step_scale if cfg.g_step_scale is not None else (1.0 / m if federated else 1.0)
    initial, _ = task.evaluate(Ks, gs)
    agents = np.arange(m)
    caps = None
    if cfg.estimator == "one_point":
        j0, _ = task.expected_costs(Ks, gs)
        caps = CAP_FACTOR * j0

    curve = np.full(cfg.T, np.nan)
    stable = np.zeros((cfg.T, m), dtype=bool)
    policies = np.full((cfg.T, m, d), np.nan) if cfg.record_policies else None
    diverged_at = None

    for t in range(cfg.T):
        if cfg.estimator == "exact":
            z = task.exact_grads(Ks, gs)
        else:
            x0s = np.empty((m, n))
            us = np.empty((m, d))
            for i in range(m):
                rng = substream(cfg.seed, i, t)
                x0s[i] = task.draw_x0(rng)
                us[i] = sample_unit_sphere(d, rng)
            dK = cfg.r * us[:, :nk].reshape(m, k, n)
            dg = cfg.r * us[:, nk:]
            if cfg.estimator == "two_point":
                c, ok = task.sample_costs(np.concatenate([Ks + dK, Ks - dK]), np.concatenate([gs + dg, gs - dg]),
                                          np.concatenate([agents, agents]), np.concatenate([x0s, x0s]))
                if not ok.all():
                    # a perturbed gain left the stable set; the run counts as failed
                    stable[t] = ok[:m] & ok[m:]
                    diverged_at = t
                    break
                z = (d / (2.0 * cfg.r)) * (c[:m] - c[m:])[:, None] * us
            else:
                c, ok = task.sample_costs(Ks + dK, gs + dg, agents, x0s)
                c = np.minimum(np.where(ok, c, caps), caps)
                z = (d / cfg.r) * c[:, None] * us

        Ks = Ks - cfg.eta * z[:, :nk].reshape(m, k, n)
        gs = gs - cfg.eta * g_scale * z[:, nk:]
        if federated and (t + 1) % cfg.H == 0:
            Ks = np.repeat(average_policies(Ks)[None], m, axis=0)

        value, ok = task.evaluate(Ks, gs)
        stable[t] = ok
        if policies is not None:
            policies[t] = np.concatenate([Ks.reshape(m, nk), gs], axis=1)
        if not ok.all():
            if cfg.estimator == "one_point":
                # the cap keeps one-point training alive; an unstable iterate just has infinite gap
                curve[t] = np.inf
                continue
            diverged_at = t
            break
        curve[t] = value

    if diverged_at is not None:
        outcome = "diverged"
    elif task.metric == "gap" and curve[-1] <= cfg.eps:
        outcome = "converged"
    else:
        outcome = "completed"
    return TrainTrace(curve=curve, stable=stable, final_K=Ks, final_g=gs, outcome=outcome,
                      diverged_at=diverged_at, metric=task.metric, initial=initial, policies=policies)


def run_federated(prob, cfg):
    """Local zeroth-order steps with K averaged across agents every H iterations.

    ``prob`` is an LqrProblem or a task object (e.g. CartpoleTask).
    """
    return _train(_as_task(prob, cfg), cfg, federated=True)


def run_independent(prob, cfg):
    """Each agent learns alone: no averaging, offset step uses eta."""
    return _train(_as_task(prob, cfg), cfg, federated=False)
