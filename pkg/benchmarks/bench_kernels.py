"""Time the batched kernels under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The numba path is timed in this process after a warm-up call (compilation is
cached on disk). The numpy path uses the vectorized fallbacks, which are the
functions selected when FEDLQR_USE_NUMBA=0.
"""
import argparse
import time

import numpy as np

from fedlqr import _kernels
from fedlqr.analytic import solve_optimal
from fedlqr.cartpole import CartpoleParams, spaced_targets
from fedlqr.harness.config import ExperimentConfig, build_problem


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def value_params_args():
    # one two-point iteration of the 3x3 problem with 8 agents: 16 policies
    prob = build_problem(ExperimentConfig(), 8)
    K = solve_optimal(prob, 0)[0].K
    rng = np.random.default_rng(0)
    Ks = 0.9 * K + 0.01 * rng.normal(size=(16, 3, 3))
    gs = rng.normal(size=(16, 3))
    xs = np.repeat(prob.targets, 2, axis=0)
    return (prob.A, prob.B, prob.Q, prob.R, prob.gamma, xs, Ks, gs, _kernels.FIXED_POINT_TOL,
            _kernels.FIXED_POINT_MAX_ITER)


def episode_args():
    # one two-point cartpole iteration with 5 agents: 10 episodes of 300 steps
    p = CartpoleParams()
    rng = np.random.default_rng(1)
    ks = np.array([0.3, -5.0, 0.6, -1.5]) + 0.01 * rng.normal(size=(10, 4))
    gs = 0.01 * rng.normal(size=10)
    x0s = rng.uniform(-0.05, 0.05, size=(10, 4))
    targets = np.repeat(spaced_targets(5), 2, axis=0)
    return (p.vector(), p.Q, p.Rscalar, p.gamma, p.episode_len, targets, ks, gs, x0s, 1e6)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    cases = [
        ("batch_value_params (16 x 3x3)", _kernels.batch_value_params, _kernels.numpy_batch_value_params,
         value_params_args()),
        ("batch_episodes (10 x 300 steps)", _kernels.batch_episodes, _kernels.numpy_batch_episodes, episode_args()),
    ]
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow, a in cases:
        tf = best_of(fast, a, args.repeat)
        ts = best_of(slow, a, args.repeat)
        print(f"{name:34s} {1e3 * tf:10.3f} {1e3 * ts:10.3f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
