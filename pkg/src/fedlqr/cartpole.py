"""Cart with an inverted pendulum, stepped by semi-implicit Euler.

State is [p, theta, p_dot, theta_dot] with theta = 0 upright.  Equations of
motion (F is the horizontal force on the cart):

    (M + m) p'' - m L cos(th) th'' + c p' + m L sin(th) th'^2 = F
    -m L cos(th) p'' + (I + m L^2) th'' + v th' - m g L sin(th) = 0
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import Diverged, SingularMassMatrix
from .lqr import Policy
from .numerics import as_vector

DIVERGENCE_LIMIT = 1e6


class CartpoleState(NamedTuple):
    p: float
    theta: float
    p_dot: float
    theta_dot: float


def _default_q():
    return 0.1 * np.diag([1.0, 100.0, 1.0, 1.0])


@dataclass
class CartpoleParams:
    M: float = 1.0
    mp: float = 0.1
    L: float = 1.0
    grav: float = 9.8
    inertia: float = None  # defaults to a uniform rod about its center, mp L^2 / 12
    c: float = 0.0
    v: float = 0.0
    dt: float = 0.02
    Q: np.ndarray = field(default_factory=_default_q)
    Rscalar: float = 0.1
    gamma: float = 0.95
    episode_len: int = 300

    def __post_init__(self):
        if self.inertia is None:
            self.inertia = self.mp * self.L ** 2 / 12.0
        for name in ("M", "mp", "L", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.Rscalar > 0:
            raise ValueError("Rscalar must be positive")
        self.Q = np.ascontiguousarray(self.Q, dtype=float)
        if self.Q.shape != (4, 4) or np.min(np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))) < -1e-12:
            raise ValueError("Q must be a 4x4 PSD matrix")

    def vector(self):
        return np.array([self.M, self.mp, self.L, self.grav, self.inertia, self.c, self.v, self.dt])


def spaced_targets(m=5):
    """Agent i tracks cart position (-2 + i) * 0.5 with the pole upright."""
    t = np.zeros((m, 4))
    t[:, 0] = (-2.0 + np.arange(m)) * 0.5
    return t


def cartpole_step(params, state, force):
    x = as_vector(state, "state", 4)
    out, ok = _kernels.cartpole_step(params.vector(), x, float(force))
    if not ok:
        raise SingularMassMatrix("mass matrix determinant below 1e-12")
    return out


def episode_cost(params, target, policy, x0):
    """Discounted tracking cost over exactly ``episode_len`` steps with F = Kx + g."""
    k = np.ascontiguousarray(np.asarray(policy.K, dtype=float).reshape(4))
    g = float(np.asarray(policy.g, dtype=float).reshape(-1)[0])
    cost, status = _kernels.cartpole_episode(params.vector(), params.Q, float(params.Rscalar), float(params.gamma),
                                             int(params.episode_len), as_vector(target, "target", 4), k, g,
                                             as_vector(x0, "x0", 4), DIVERGENCE_LIMIT)
    if status == _kernels.SINGULAR:
        raise SingularMassMatrix("mass matrix determinant below 1e-12")
    if status != _kernels.OK:
        raise Diverged(f"cartpole state exceeded {DIVERGENCE_LIMIT:g}")
    return float(cost)


def batch_episode_costs(params, targets, Ks, gs, x0s):
    """Vectorized episode costs; returns (costs, ok) with ok False for diverged episodes."""
    ks = np.ascontiguousarray(np.asarray(Ks, dtype=float).reshape(-1, 4))
    g = np.ascontiguousarray(np.asarray(gs, dtype=float).reshape(-1))
    costs, status = _kernels.batch_episodes(params.vector(), params.Q, float(params.Rscalar), float(params.gamma),
                                            int(params.episode_len), np.ascontiguousarray(targets, dtype=float),
                                            ks, g, np.ascontiguousarray(x0s, dtype=float), DIVERGENCE_LIMIT)
    return costs, status == _kernels.OK


def mechanical_energy(params, state):
    p, th, pd, thd = as_vector(state, "state", 4)
    kinetic = (0.5 * (params.M + params.mp) * pd ** 2 - params.mp * params.L * np.cos(th) * pd * thd
               + 0.5 * (params.inertia + params.mp * params.L ** 2) * thd ** 2)
    return float(kinetic + params.mp * params.grav * params.L * np.cos(th))


def linearize(params, h=1e-6):
    """Central-difference Jacobians (A, B) of one step at the upright equilibrium."""
    x0 = np.zeros(4)
    A = np.column_stack([(cartpole_step(params, x0 + h * e, 0.0) - cartpole_step(params, x0 - h * e, 0.0)) / (2 * h)
                         for e in np.eye(4)])
    B = ((cartpole_step(params, x0, h) - cartpole_step(params, x0, -h)) / (2 * h)).reshape(4, 1)
    return A, B


def sample_initial_state(rng, low=-0.05, high=0.05):
    return rng.uniform(low, high, size=4)


def zero_policy():
    return Policy(np.zeros((1, 4)), np.zeros(1))
