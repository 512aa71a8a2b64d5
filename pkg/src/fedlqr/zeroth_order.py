"""Zeroth-order policy-gradient estimators over the flattened policy (K, g).

A policy is flattened as the rows of K followed by g, so the perturbation
dimension is d = n*k + k.
"""
from dataclasses import dataclass

import numpy as np

from .analytic import sample_cost
from .errors import DimensionMismatch, Diverged, UnstablePerturbation, UnstablePolicy
from .lqr import Policy, rollout_cost


@dataclass
class GradEstimate:
    zK: np.ndarray
    zg: np.ndarray

    def flat(self):
        return np.concatenate([self.zK.ravel(), self.zg])

    def norm(self):
        return float(np.linalg.norm(self.flat()))


def flatten(policy):
    return np.concatenate([policy.K.ravel(), policy.g])


def unflatten(entries, k, n):
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 1 or entries.shape[0] != n * k + k:
        raise DimensionMismatch(f"expected a vector of length {n * k + k}, got shape {entries.shape}")
    return Policy(entries[: n * k].reshape(k, n).copy(), entries[n * k:].copy())


def policy_dim(policy):
    k, n = policy.K.shape
    return n * k + k


def sample_unit_sphere(d, rng):
    """Uniform draw from the unit sphere in R^d (normalized Gaussian)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    while True:
        v = rng.standard_normal(d)
        nrm = np.linalg.norm(v)
        if nrm > 0.0:
            return v / nrm


def perturb(policy, u, scale):
    k, n = policy.K.shape
    return unflatten(flatten(policy) + scale * np.asarray(u, dtype=float), k, n)


def _as_estimate(vec, k, n):
    return GradEstimate(vec[: n * k].reshape(k, n), vec[n * k:])


def two_point_from_costs(j_plus, j_minus, u, r):
    return (u.shape[0] / (2.0 * r)) * (j_plus - j_minus) * u


def one_point_from_cost(j_plus, u, r, cap):
    return (u.shape[0] / r) * min(j_plus, cap) * u


def two_point_estimate(costfn, policy, x0, u, r):
    """(d / 2r) (J(theta + r u; x0) - J(theta - r u; x0)) u, both at the same x0.

    Raises UnstablePerturbation when ``costfn`` rejects either perturbed
    policy (UnstablePolicy or Diverged).
    """
    if r <= 0:
        raise ValueError("smoothing radius must be positive")
    u = np.asarray(u, dtype=float)
    if u.shape != (policy_dim(policy),):
        raise DimensionMismatch(f"perturbation must have length {policy_dim(policy)}")
    try:
        j_plus = costfn(perturb(policy, u, r), x0)
        j_minus = costfn(perturb(policy, u, -r), x0)
    except (UnstablePolicy, Diverged) as exc:
        raise UnstablePerturbation(str(exc)) from exc
    k, n = policy.K.shape
    return _as_estimate(two_point_from_costs(j_plus, j_minus, u, r), k, n)


def one_point_estimate(costfn, policy, x0, u, r, cap):
    """(d / r) min(J(theta + r u; x0), cap) u.

    A perturbation that is unstable or diverges is charged ``cap``.
    """
    if r <= 0:
        raise ValueError("smoothing radius must be positive")
    u = np.asarray(u, dtype=float)
    if u.shape != (policy_dim(policy),):
        raise DimensionMismatch(f"perturbation must have length {policy_dim(policy)}")
    try:
        j_plus = costfn(perturb(policy, u, r), x0)
    except (UnstablePolicy, Diverged):
        j_plus = cap
    k, n = policy.K.shape
    return _as_estimate(one_point_from_cost(j_plus, u, r, cap), k, n)


def lqr_costfn(prob, agent, mode="exact", horizon=None):
    """Per-sample cost J(policy; x0) for one agent.

    ``exact`` evaluates the infinite-horizon value function; ``rollout``
    simulates a truncated trajectory instead.
    """
    if mode == "exact":
        return lambda policy, x0: sample_cost(prob, agent, policy, x0)
    if mode == "rollout":
        return lambda policy, x0: rollout_cost(prob, agent, policy, x0, horizon)
    raise ValueError(f"unknown cost mode {mode!r}")
