"""Exact (model-based) oracles for the discounted LQR tracking cost.

These are ground truth for tests and for the optimality gap reported by the
trainers; the learners themselves never call them.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NonConvergence, SingularMatrix, UnstablePolicy
from .lqr import InitSampler, Policy, _check_policy, closed_loop, initial_moments
from .numerics import as_vector, min_eigenvalue, solve_linear, spectral_radius

TOL = _kernels.FIXED_POINT_TOL
MAX_ITER = _kernels.FIXED_POINT_MAX_ITER


@dataclass
class ValueParams:
    """Cost-to-go from z is z'Pz + 2z'q + r."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def value(self, z):
        return float(z @ self.P @ z + 2.0 * z @ self.q + self.r)


@dataclass
class DiscountedMoments:
    second_moment: np.ndarray  # E[sum_t gamma^t x_t x_t']
    mean: np.ndarray  # E[sum_t gamma^t x_t]
    beta: float  # sum_t gamma^t


@dataclass
class GradPair:
    dK: np.ndarray
    dg: np.ndarray

    def flat(self):
        return np.concatenate([self.dK.ravel(), self.dg])

    def norm(self):
        return float(np.linalg.norm(self.flat()))


def _raise_for(status):
    if status == _kernels.UNSTABLE:
        raise UnstablePolicy("sqrt(gamma) * rho(A + BK) >= 1")
    if status == _kernels.NOT_CONVERGED:
        raise NonConvergence("Lyapunov fixed point did not converge")
    if status == _kernels.SINGULAR:
        raise SingularMatrix("I - gamma (A + BK)^T is singular")


def solve_policy_value(prob, agent, policy):
    _check_policy(prob, policy)
    P, q, r, status = _kernels.value_params(prob.A, prob.B, prob.Q, prob.R, prob.gamma, prob.targets[agent],
                                            policy.K, policy.g, TOL, MAX_ITER)
    _raise_for(status)
    return ValueParams(P, q, float(r))


def expected_cost(prob, agent, policy, sampler=InitSampler.GAUSSIAN):
    """tr(P S) + 2 mu'q + r for initial second moment S and mean mu."""
    vp = solve_policy_value(prob, agent, policy)
    S, mu = initial_moments(prob, sampler)
    return float(np.sum(vp.P * S) + 2.0 * mu @ vp.q + vp.r)


def sample_cost(prob, agent, policy, x0):
    """Exact infinite-horizon cost from ``x0``."""
    x0 = as_vector(x0, "x0", prob.n)
    return solve_policy_value(prob, agent, policy).value(x0)


def discounted_moments(prob, agent, policy, sampler=InitSampler.GAUSSIAN):
    """Discounted state moments under ``policy``.

    Uses mean = (I - gM)^{-1}(mu0 + g*beta*Bg) and
    X = S0 + g(M X M' + M mean b' + b mean' M' + beta b b'), b = Bg, M = A + BK.
    """
    _check_policy(prob, policy)
    M = closed_loop(prob, policy.K)
    if np.sqrt(prob.gamma) * spectral_radius(M) >= 1.0 - _kernels.STABILITY_MARGIN:
        raise UnstablePolicy("sqrt(gamma) * rho(A + BK) >= 1")
    gamma = prob.gamma
    beta = 1.0 / (1.0 - gamma)
    S0, mu0 = initial_moments(prob, sampler)
    b = prob.B @ policy.g
    mean = solve_linear(np.eye(prob.n) - gamma * M, mu0 + gamma * beta * b)
    Mm = M @ mean
    W = S0 + gamma * (np.outer(Mm, b) + np.outer(b, Mm) + beta * np.outer(b, b))
    X, iters = _kernels.lyapunov(np.ascontiguousarray(M.T), W, gamma, TOL, MAX_ITER)
    if iters < 0:
        raise NonConvergence("discounted covariance fixed point did not converge")
    return DiscountedMoments(X, mean, beta)


def _gain_terms(prob, vp, policy):
    gamma = prob.gamma
    BtP = prob.B.T @ vp.P
    C = prob.R @ policy.K + gamma * BtP @ (prob.B @ policy.K + prob.A)
    d = prob.R @ policy.g + gamma * BtP @ (prob.B @ policy.g) + gamma * prob.B.T @ vp.q
    return C, d


def exact_gradient(prob, agent, policy, sampler=InitSampler.GAUSSIAN):
    vp = solve_policy_value(prob, agent, policy)
    mom = discounted_moments(prob, agent, policy, sampler)
    C, d = _gain_terms(prob, vp, policy)
    dK = 2.0 * C @ mom.second_moment + 2.0 * np.outer(d, mom.mean)
    dg = 2.0 * C @ mom.mean + 2.0 * mom.beta * d
    return GradPair(dK, dg)


def solve_optimal(prob, agent):
    """Optimal affine policy by Riccati value iteration, then the offset recursion.

    Returns (Policy, ValueParams). The gain is the same for every agent.
    """
    A, B, Q, R, gamma = prob.A, prob.B, prob.Q, prob.R, prob.gamma
    xstar = prob.targets[agent]
    P, K, iters = _kernels.riccati(A, B, Q, R, gamma, TOL, MAX_ITER)
    if iters < 0:
        raise NonConvergence("Riccati iteration did not converge")
    q, iters = _kernels.tracking_offset(A, B, Q, R, gamma, P, xstar, TOL, MAX_ITER)
    if iters < 0:
        raise NonConvergence("tracking offset iteration did not converge")
    G = R + gamma * B.T @ P @ B
    Bq = gamma * B.T @ q
    g = -solve_linear(G, Bq)
    r = (xstar @ Q @ xstar - Bq @ solve_linear(G, Bq)) / (1.0 - gamma)
    return Policy(K, g), ValueParams(P, q, float(r))


def optimal_cost(prob, agent, sampler=InitSampler.GAUSSIAN):
    _, vp = solve_optimal(prob, agent)
    S, mu = initial_moments(prob, sampler)
    return float(np.sum(vp.P * S) + 2.0 * mu @ vp.q + vp.r)


def average_optimal_cost(prob, sampler=InitSampler.GAUSSIAN):
    """J_avg*: mean over agents of each agent's optimal expected cost."""
    return float(np.mean([optimal_cost(prob, i, sampler) for i in range(prob.m)]))


def gradient_domination_constant(prob, agent):
    """mu = C* / (4 min(alpha, 1)^2 sigma_min(R)) from the optimal-policy moments."""
    opt, _ = solve_optimal(prob, agent)
    mom = discounted_moments(prob, agent, opt, InitSampler.GAUSSIAN)
    rho_norm = float(np.linalg.norm(mom.mean))
    c_star = max(spectral_radius(mom.second_moment) + rho_norm, mom.beta + rho_norm)
    alpha = min_eigenvalue(prob.sigma)
    return c_star / (4.0 * min(alpha, 1.0) ** 2 * min_eigenvalue(prob.R))


def check_gradient_domination(prob, agent, policy):
    """Returns (J - J*, mu * ||grad J||_F^2, holds) under the Gaussian sampler."""
    lhs = expected_cost(prob, agent, policy) - optimal_cost(prob, agent)
    grad = exact_gradient(prob, agent, policy)
    rhs = gradient_domination_constant(prob, agent) * grad.norm() ** 2
    return lhs, rhs, bool(lhs <= rhs + 1e-9)
