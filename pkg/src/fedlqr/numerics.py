"""Small dense linear algebra used throughout the package.

Matrices and vectors are plain float64 numpy arrays in row-major (C) order.
"""
import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NonConvergence, SingularMatrix


def as_matrix(M, name="matrix", shape=None):
    arr = np.ascontiguousarray(M, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatch(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name="vector", dim=None):
    arr = np.ascontiguousarray(np.atleast_1d(np.asarray(v, dtype=float)))
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def solve_linear(M, rhs):
    """Solve ``M X = rhs`` by partial-pivot Gaussian elimination.

    ``rhs`` may be a vector or a matrix; the result has the same shape.
    Raises SingularMatrix when a pivot falls below 1e-12 in magnitude.
    """
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"M must be square, got {M.shape}")
    rhs_arr = np.asarray(rhs, dtype=float)
    vec = rhs_arr.ndim == 1
    R = np.ascontiguousarray(rhs_arr.reshape(-1, 1) if vec else rhs_arr)
    if R.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"rhs has {R.shape[0]} rows, M has {M.shape[0]}")
    X, ok = _kernels.solve(M, R)
    if not ok:
        raise SingularMatrix("pivot magnitude below 1e-12")
    return X[:, 0].copy() if vec else X


def spectral_radius(M):
    """Largest eigenvalue modulus (Hessenberg-QR via LAPACK)."""
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"M must be square, got {M.shape}")
    try:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc


def min_eigenvalue(M):
    """Smallest eigenvalue of a symmetric PSD matrix as c - rho(cI - M)."""
    M = as_matrix(M, "M")
    c = spectral_radius(M)
    return c - spectral_radius(c * np.eye(M.shape[0]) - M)


def is_symmetric_pd(M, tol=1e-10):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if not np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max())):
        return False
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True
