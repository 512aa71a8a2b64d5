import numpy as np
import pytest

from fedlqr.lqr import LqrProblem


def scalar_problem(xstar=0.0, gamma=0.5):
    """A=0, B=1, Q=1, R=1, Sigma=1: every quantity has a closed form."""
    one = np.array([[1.0]])
    return LqrProblem(A=np.zeros((1, 1)), B=one, Q=one, R=one, gamma=gamma, sigma=one, targets=[[xstar]])


def random_problem(rng, n=None, k=None, m=2, gamma=None, sigma_identity=False):
    n = n or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, 5))
    gamma = gamma if gamma is not None else float(rng.uniform(0.5, 0.95))
    A = rng.normal(size=(n, n)) / np.sqrt(n)
    B = rng.normal(size=(n, k))
    Lq = rng.normal(size=(n, n))
    Lr = rng.normal(size=(k, k))
    Q = Lq @ Lq.T + 0.5 * np.eye(n)
    R = Lr @ Lr.T + 0.5 * np.eye(k)
    if sigma_identity:
        S = np.eye(n)
    else:
        Ls = rng.normal(size=(n, n))
        S = Ls @ Ls.T / n + 0.5 * np.eye(n)
    return LqrProblem(A=A, B=B, Q=Q, R=R, gamma=gamma, sigma=S, targets=rng.normal(size=(m, n)))


def random_stable_policy(prob, rng, agent=0, spread=0.3, strict=False):
    """Perturb the optimal policy and keep it only if discounted-stable.

    ``strict`` additionally asks for rho(A + BK) < 1, so that the stage costs
    decay at least as fast as gamma^t.
    """
    from fedlqr.analytic import solve_optimal
    from fedlqr.lqr import Policy, is_stable

    opt, _ = solve_optimal(prob, agent)
    while True:
        K = opt.K + spread * rng.normal(size=opt.K.shape)
        if strict and np.max(np.abs(np.linalg.eigvals(prob.A + prob.B @ K))) >= 1.0:
            continue
        if is_stable(prob, K):
            return Policy(K, opt.g + rng.normal(size=opt.g.shape))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
