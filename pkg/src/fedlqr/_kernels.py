"""Hot numeric kernels.

Every kernel has two implementations: a numba ``@njit`` version and a
pure-numpy version.  Loop-shaped kernels (linear solve, fixed-point
iterations, single rollouts) share one source which is either compiled or
run as plain Python; the batched kernels have a separate numpy version that
vectorizes over the batch axis instead of looping.

Set ``FEDLQR_USE_NUMBA=0`` before import to force the numpy path.
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("FEDLQR_USE_NUMBA", "1").lower() not in ("0", "false", "no")

# status codes returned by the kernels
OK = 0
UNSTABLE = 1
NOT_CONVERGED = 2
DIVERGED = 3
SINGULAR = 4

PIVOT_TOL = 1e-12
STABILITY_MARGIN = 1e-9
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAX_ITER = 100_000


# ---------------------------------------------------------------------------
# loop-shaped kernels (one source, optionally compiled)
# ---------------------------------------------------------------------------

def _solve_py(M, rhs):
    """Partial-pivot Gaussian elimination. ``rhs`` is 2-D. Returns (X, ok)."""
    n = M.shape[0]
    a = M.copy()
    b = rhs.copy()
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for row in range(col + 1, n):
            if abs(a[row, col]) > best:
                best = abs(a[row, col])
                piv = row
        if best < PIVOT_TOL:
            return b, False
        if piv != col:
            tmp = a[col, :].copy()
            a[col, :] = a[piv, :]
            a[piv, :] = tmp
            tmp = b[col, :].copy()
            b[col, :] = b[piv, :]
            b[piv, :] = tmp
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            if f != 0.0:
                for j in range(col, n):
                    a[row, j] -= f * a[col, j]
                for j in range(b.shape[1]):
                    b[row, j] -= f * b[col, j]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        for j in range(b.shape[1]):
            s = b[row, j]
            for c in range(row + 1, n):
                s -= a[row, c] * x[c, j]
            x[row, j] = s / a[row, row]
    return x, True


def _spectral_radius_py(M):
    ev = np.linalg.eigvals(M.astype(np.complex128))
    return np.max(np.abs(ev))


def _lyapunov_py(M, W, gamma, tol, max_iter):
    """Fixed point of X = W + gamma * M^T X M. Returns (X, iterations or -1)."""
    Mt = np.ascontiguousarray(M.T)
    X = W.copy()
    for it in range(max_iter):
        Xn = W + gamma * (Mt @ X @ M)
        diff = math.sqrt(np.sum((Xn - X) ** 2))
        X = Xn
        if not math.isfinite(diff):
            return X, -1
        if diff <= tol * max(1.0, math.sqrt(np.sum(X ** 2))):
            return 0.5 * (X + np.ascontiguousarray(X.T)), it + 1
    return X, -1


def _value_params_py(A, B, Q, R, gamma, xstar, K, g, tol, max_iter):
    """(P, q, r, status) of the affine policy u = Kx + g."""
    n = A.shape[0]
    M = A + B @ K
    P = np.full((n, n), np.nan)
    q = np.full(n, np.nan)
    if math.sqrt(gamma) * _spectral_radius(M) >= 1.0 - STABILITY_MARGIN:
        return P, q, np.nan, UNSTABLE
    Kt = np.ascontiguousarray(K.T)
    W = Q + Kt @ R @ K
    P, iters = _lyapunov(M, W, gamma, tol, max_iter)
    if iters < 0:
        return P, q, np.nan, NOT_CONVERGED
    Bg = B @ g
    Mt = np.ascontiguousarray(M.T)
    rhs = -(Q @ xstar) + Kt @ (R @ g) + gamma * (Mt @ (P @ Bg))
    S = np.eye(n) - gamma * Mt
    sol, ok = _solve(S, rhs.reshape(n, 1))
    if not ok:
        return P, q, np.nan, SINGULAR
    q = sol[:, 0].copy()
    r = (xstar @ (Q @ xstar) + g @ (R @ g)
         + gamma * (Bg @ (P @ Bg) + 2.0 * (Bg @ q))) / (1.0 - gamma)
    return P, q, r, OK


def _riccati_py(A, B, Q, R, gamma, tol, max_iter):
    """Discounted Riccati value iteration from P = Q. Returns (P, K, iterations or -1)."""
    n = A.shape[0]
    At = np.ascontiguousarray(A.T)
    Bt = np.ascontiguousarray(B.T)
    P = Q.copy()
    K = np.zeros((B.shape[1], n))
    for it in range(max_iter):
        G = R + gamma * (Bt @ P @ B)
        F = gamma * (Bt @ P @ A)
        sol, ok = _solve(G, F)
        if not ok:
            return P, K, -1
        Pn = Q - np.ascontiguousarray(F.T) @ sol + gamma * (At @ P @ A)
        Pn = 0.5 * (Pn + np.ascontiguousarray(Pn.T))
        diff = math.sqrt(np.sum((Pn - P) ** 2))
        P = Pn
        if not math.isfinite(diff):
            return P, K, -1
        if diff <= tol * max(1.0, math.sqrt(np.sum(P ** 2))):
            G = R + gamma * (Bt @ P @ B)
            sol, ok = _solve(G, gamma * (Bt @ P @ A))
            return P, -sol, it + 1
    return P, K, -1


def _tracking_offset_py(A, B, Q, R, gamma, P, xstar, tol, max_iter):
    """Fixed point of q = -Q x* - (g B'PA)'(R + g B'PB)^{-1} g B'q + g A'q."""
    n = A.shape[0]
    At = np.ascontiguousarray(A.T)
    Bt = np.ascontiguousarray(B.T)
    G = R + gamma * (Bt @ P @ B)
    F = gamma * (Bt @ P @ A)
    Ft = np.ascontiguousarray(F.T)
    c = -(Q @ xstar)
    q = c.copy()
    for it in range(max_iter):
        sol, ok = _solve(G, (gamma * (Bt @ q)).reshape(-1, 1))
        if not ok:
            return q, -1
        qn = c - Ft @ np.ascontiguousarray(sol[:, 0]) + gamma * (At @ q)
        diff = math.sqrt(np.sum((qn - q) ** 2))
        q = qn
        if not math.isfinite(diff):
            return q, -1
        if diff <= tol * max(1.0, math.sqrt(np.sum(q ** 2))):
            return q, it + 1
    return q, -1


def _rollout_py(A, B, Q, R, gamma, xstar, K, g, x0, horizon, limit):
    x = x0.copy()
    cost = 0.0
    disc = 1.0
    for t in range(horizon):
        u = K @ x + g
        e = x - xstar
        cost += disc * (e @ (Q @ e) + u @ (R @ u))
        x = A @ x + B @ u
        for j in range(x.shape[0]):
            if not abs(x[j]) <= limit:
                return cost, DIVERGED
        disc *= gamma
    return cost, OK


def _cartpole_step_py(params, state, force):
    """One semi-implicit Euler step. params = [M, mp, L, grav, inertia, c, v, dt]."""
    M, mp, L, grav, inertia, c, v, dt = (params[0], params[1], params[2], params[3],
                                         params[4], params[5], params[6], params[7])
    p, th, pd, thd = state[0], state[1], state[2], state[3]
    ml = mp * L
    cth = math.cos(th)
    sth = math.sin(th)
    a11 = M + mp
    a12 = -ml * cth
    a21 = -ml * cth
    a22 = inertia + mp * L * L
    b1 = force - c * pd - ml * sth * thd * thd
    b2 = mp * grav * L * sth - v * thd
    det = a11 * a22 - a12 * a21
    out = np.empty(4)
    if abs(det) < PIVOT_TOL:
        out[:] = np.nan
        return out, False
    pdd = (b1 * a22 - a12 * b2) / det
    thdd = (a11 * b2 - a21 * b1) / det
    pd_new = pd + dt * pdd
    thd_new = thd + dt * thdd
    out[0] = p + dt * pd_new
    out[1] = th + dt * thd_new
    out[2] = pd_new
    out[3] = thd_new
    return out, True


def _cartpole_episode_py(params, Q, R, gamma, steps, xstar, k, g, x0, limit):
    """Discounted tracking cost of F = k.x + g over exactly ``steps`` steps."""
    x = x0.copy()
    cost = 0.0
    disc = 1.0
    for t in range(steps):
        force = k @ x + g
        e = x - xstar
        cost += disc * (e @ (Q @ e) + R * force * force)
        x, ok = _cartpole_step(params, x, force)
        if not ok:
            return cost, SINGULAR
        for j in range(4):
            if not abs(x[j]) <= limit:
                return cost, DIVERGED
        disc *= gamma
    return cost, OK


# ---------------------------------------------------------------------------
# batched kernels: numba loops over the batch ...
# ---------------------------------------------------------------------------

def _batch_value_params_loop(A, B, Q, R, gamma, xstars, Ks, gs, tol, max_iter):
    p = Ks.shape[0]
    n = A.shape[0]
    P = np.empty((p, n, n))
    q = np.empty((p, n))
    r = np.empty(p)
    status = np.empty(p, dtype=np.int64)
    for i in range(p):
        Pi, qi, ri, si = _value_params(A, B, Q, R, gamma, xstars[i], Ks[i], gs[i], tol, max_iter)
        P[i] = Pi
        q[i] = qi
        r[i] = ri
        status[i] = si
    return P, q, r, status


def _batch_episodes_loop(params, Q, R, gamma, steps, xstars, ks, gs, x0s, limit):
    p = ks.shape[0]
    costs = np.empty(p)
    status = np.empty(p, dtype=np.int64)
    for i in range(p):
        c, s = _cartpole_episode(params, Q, R, gamma, steps, xstars[i], ks[i], gs[i], x0s[i], limit)
        costs[i] = c
        status[i] = s
    return costs, status


# ---------------------------------------------------------------------------
# ... numpy vectorizes across it
# ---------------------------------------------------------------------------

def _batch_value_params_numpy(A, B, Q, R, gamma, xstars, Ks, gs, tol, max_iter):
    p = Ks.shape[0]
    n = A.shape[0]
    M = A[None] + B[None] @ Ks
    rho = np.max(np.abs(np.linalg.eigvals(M)), axis=-1) if p else np.zeros(0)
    status = np.where(np.sqrt(gamma) * rho >= 1.0 - STABILITY_MARGIN, UNSTABLE, OK).astype(np.int64)
    P = np.full((p, n, n), np.nan)
    q = np.full((p, n), np.nan)
    r = np.full(p, np.nan)
    idx = np.flatnonzero(status == OK)
    if idx.size == 0:
        return P, q, r, status
    Ms, Kk, gg, xs = M[idx], Ks[idx], gs[idx], xstars[idx]
    Mt = np.swapaxes(Ms, 1, 2)
    W = Q[None] + np.swapaxes(Kk, 1, 2) @ R[None] @ Kk
    X = W.copy()
    active = np.ones(idx.size, dtype=bool)
    for _ in range(max_iter):
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        Xn = W[a] + gamma * (Mt[a] @ X[a] @ Ms[a])
        diff = np.sqrt(np.sum((Xn - X[a]) ** 2, axis=(1, 2)))
        X[a] = Xn
        scale = np.maximum(1.0, np.sqrt(np.sum(Xn ** 2, axis=(1, 2))))
        done = diff <= tol * scale
        bad = ~np.isfinite(diff)
        active[a[done | bad]] = False
        status[idx[a[bad]]] = NOT_CONVERGED
    status[idx[active]] = NOT_CONVERGED
    X = 0.5 * (X + np.swapaxes(X, 1, 2))
    Bg = gs[idx] @ B.T
    rhs = -(xs @ Q.T) + np.einsum("pji,pj->pi", Kk, gg @ R.T) \
        + gamma * np.einsum("pji,pj->pi", Ms, np.einsum("pij,pj->pi", X, Bg))
    S = np.eye(n)[None] - gamma * Mt
    qq = np.linalg.solve(S, rhs[..., None])[..., 0]
    rr = (np.einsum("pi,ij,pj->p", xs, Q, xs) + np.einsum("pi,ij,pj->p", gg, R, gg)
          + gamma * (np.einsum("pi,pij,pj->p", Bg, X, Bg) + 2.0 * np.sum(Bg * qq, axis=1))) / (1.0 - gamma)
    ok = status[idx] == OK
    P[idx[ok]] = X[ok]
    q[idx[ok]] = qq[ok]
    r[idx[ok]] = rr[ok]
    return P, q, r, status


def _batch_episodes_numpy(params, Q, R, gamma, steps, xstars, ks, gs, x0s, limit):
    M, mp, L, grav, inertia, c, v, dt = params
    x = x0s.astype(float).copy()
    p = x.shape[0]
    costs = np.zeros(p)
    status = np.zeros(p, dtype=np.int64)
    live = np.ones(p, dtype=bool)
    disc = 1.0
    ml = mp * L
    for _ in range(steps):
        force = np.sum(ks * x, axis=1) + gs
        e = x - xstars
        stage = np.einsum("pi,ij,pj->p", e, Q, e) + R * force * force
        costs[live] += disc * stage[live]
        pd, th, thd = x[:, 2], x[:, 1], x[:, 3]
        cth, sth = np.cos(th), np.sin(th)
        a11 = M + mp
        a12 = -ml * cth
        a22 = inertia + mp * L * L
        b1 = force - c * pd - ml * sth * thd * thd
        b2 = mp * grav * L * sth - v * thd
        det = a11 * a22 - a12 * a12
        sing = live & (np.abs(det) < PIVOT_TOL)
        status[sing] = SINGULAR
        live &= ~sing
        det = np.where(live, det, 1.0)
        pdd = (b1 * a22 - a12 * b2) / det
        thdd = (a11 * b2 - a12 * b1) / det
        new = np.empty_like(x)
        new[:, 2] = pd + dt * pdd
        new[:, 3] = thd + dt * thdd
        new[:, 0] = x[:, 0] + dt * new[:, 2]
        new[:, 1] = th + dt * new[:, 3]
        x = np.where(live[:, None], new, x)
        blown = live & ~np.all(np.abs(x) <= limit, axis=1)
        status[blown] = DIVERGED
        live &= ~blown
        if not live.any():
            break
        disc *= gamma
    return costs, status


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

if USE_NUMBA:
    _jit = numba.njit(cache=True)
    _solve = _jit(_solve_py)
    _spectral_radius = _jit(_spectral_radius_py)
    _lyapunov = _jit(_lyapunov_py)
    _value_params = _jit(_value_params_py)
    _riccati = _jit(_riccati_py)
    _tracking_offset = _jit(_tracking_offset_py)
    _rollout = _jit(_rollout_py)
    _cartpole_step = _jit(_cartpole_step_py)
    _cartpole_episode = _jit(_cartpole_episode_py)
    batch_value_params = _jit(_batch_value_params_loop)
    batch_episodes = _jit(_batch_episodes_loop)
    BACKEND = "numba"
else:
    _solve = _solve_py
    _spectral_radius = _spectral_radius_py
    _lyapunov = _lyapunov_py
    _value_params = _value_params_py
    _riccati = _riccati_py
    _tracking_offset = _tracking_offset_py
    _rollout = _rollout_py
    _cartpole_step = _cartpole_step_py
    _cartpole_episode = _cartpole_episode_py
    batch_value_params = _batch_value_params_numpy
    batch_episodes = _batch_episodes_numpy
    BACKEND = "numpy"

solve = _solve
spectral_radius = _spectral_radius
lyapunov = _lyapunov
value_params = _value_params
riccati = _riccati
tracking_offset = _tracking_offset
rollout = _rollout
cartpole_step = _cartpole_step
cartpole_episode = _cartpole_episode

# the numpy batch versions stay importable for cross-checks and benchmarks
numpy_batch_value_params = _batch_value_params_numpy
numpy_batch_episodes = _batch_episodes_numpy
