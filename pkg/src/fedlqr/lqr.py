"""Multi-agent LQR tracking problem: data, dynamics and truncated rollouts."""
import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, Diverged, NonConvergence, NotPositiveDefinite
from .numerics import as_matrix, as_vector, is_symmetric_pd, spectral_radius

DIVERGENCE_LIMIT = 1e100
MAX_HORIZON = 5000


class InitSampler(str, enum.Enum):
    GAUSSIAN = "gaussian"
    CANONICAL_BASIS = "canonical_basis"


@dataclass(frozen=True, eq=False)
class LqrProblem:
    """Shared dynamics (A, B), costs (Q, R), discount and one target per agent.

    ``targets`` has shape (m, n).
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    sigma: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
        k = B.shape[1]
        Q = as_matrix(self.Q, "Q", (n, n))
        R = as_matrix(self.R, "R", (k, k))
        sigma = as_matrix(self.sigma, "sigma", (n, n))
        targets = np.ascontiguousarray(np.atleast_2d(np.asarray(self.targets, dtype=float)))
        if targets.ndim != 2 or targets.shape[1] != n or targets.shape[0] < 1:
            raise DimensionMismatch(f"targets must have shape (m, {n}), got {targets.shape}")
        if not 0.0 < float(self.gamma) < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name, mat in (("Q", Q), ("R", R), ("sigma", sigma)):
            if not is_symmetric_pd(mat):
                raise NotPositiveDefinite(f"{name} must be symmetric positive definite")
        for name, val in (("A", A), ("B", B), ("Q", Q), ("R", R), ("sigma", sigma), ("targets", targets)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def m(self):
        return self.targets.shape[0]

    def with_targets(self, targets):
        return LqrProblem(self.A, self.B, self.Q, self.R, self.gamma, self.sigma, targets)


@dataclass(eq=False)
class Policy:
    """Affine controller u = K x + g."""

    K: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.K = as_matrix(self.K, "K")
        self.g = as_vector(self.g, "g", self.K.shape[0])

    def copy(self):
        return Policy(self.K.copy(), self.g.copy())

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.K, other.K) and np.array_equal(self.g, other.g)


def _check_policy(prob, policy):
    if policy.K.shape != (prob.k, prob.n):
        raise DimensionMismatch(f"K must have shape {(prob.k, prob.n)}, got {policy.K.shape}")


def step_dynamics(prob, x, u):
    x = as_vector(x, "x", prob.n)
    u = as_vector(u, "u", prob.k)
    return prob.A @ x + prob.B @ u


def default_horizon(gamma):
    """Smallest h with gamma**h <= 1e-12, capped at 5000."""
    h = max(1, math.ceil(math.log(1e-12) / math.log(gamma)))
    while h > 1 and gamma ** (h - 1) <= 1e-12:
        h -= 1
    while gamma ** h > 1e-12 and h < MAX_HORIZON:
        h += 1
    return min(h, MAX_HORIZON)


def rollout_cost(prob, agent, policy, x0, horizon=None):
    """Discounted tracking cost of ``policy`` from ``x0`` truncated at ``horizon`` steps."""
    _check_policy(prob, policy)
    x0 = as_vector(x0, "x0", prob.n)
    if horizon is None:
        horizon = default_horizon(prob.gamma)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    cost, status = _kernels.rollout(prob.A, prob.B, prob.Q, prob.R, prob.gamma, prob.targets[agent],
                                    policy.K, policy.g, x0, int(horizon), DIVERGENCE_LIMIT)
    if status != _kernels.OK:
        raise Diverged(f"state exceeded {DIVERGENCE_LIMIT:g}")
    return float(cost)


def sample_initial_state(prob, sampler, rng):
    sampler = InitSampler(sampler)
    if sampler is InitSampler.CANONICAL_BASIS:
        x = np.zeros(prob.n)
        x[rng.integers(prob.n)] = 1.0
        return x
    try:
        L = np.linalg.cholesky(prob.sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization of sigma failed") from exc
    return L @ rng.standard_normal(prob.n)


def initial_moments(prob, sampler=InitSampler.GAUSSIAN):
    """(E[x0 x0^T], E[x0]) of the initial-state distribution."""
    if InitSampler(sampler) is InitSampler.CANONICAL_BASIS:
        return np.eye(prob.n) / prob.n, np.full(prob.n, 1.0 / prob.n)
    return prob.sigma.copy(), np.zeros(prob.n)


def closed_loop(prob, K):
    K = as_matrix(K, "K", (prob.k, prob.n))
    return prob.A + prob.B @ K


def is_stable(prob, K):
    """sqrt(gamma) * rho(A + BK) < 1 - 1e-9.

    The discounted cost only needs this weaker condition, not rho(A + BK) < 1.
    """
    try:
        rho = spectral_radius(closed_loop(prob, K))
    except NonConvergence:
        return False
    return math.sqrt(prob.gamma) * rho < 1.0 - _kernels.STABILITY_MARGIN
