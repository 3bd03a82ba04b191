"""Positive-semidefinite order on symmetric matrices."""
import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotPsd, NotSymmetric

SYM_TOL = 1e-12
MAX_SWEEPS = 100


def _as_symmetric(A, name="matrix"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    scale = 1.0 + float(np.max(np.abs(A), initial=0.0))
    if np.max(np.abs(A - A.T), initial=0.0) > SYM_TOL * scale:
        raise NotSymmetric(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def eigh(A):
    """Eigenvalues (ascending) and eigenvectors by cyclic Jacobi rotations."""
    A = _as_symmetric(A)
    scale = float(np.max(np.abs(A), initial=0.0))
    w, v = _kernels.jacobi_eigh(A, 1e-15 * max(scale, 1e-300), MAX_SWEEPS)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def default_tol(A):
    return 1e-9 * (1.0 + float(np.max(np.abs(A), initial=0.0)))


def min_eigenvalue(A):
    return float(eigh(A)[0][0]) if np.size(A) else 0.0


def is_psd(A, tol=None):
    A = _as_symmetric(A)
    if tol is None:
        tol = default_tol(A)
    if A.size == 0:
        return True
    return min_eigenvalue(A) >= -tol


def psd_leq(A, B, tol=None):
    """A <= B in the Loewner order, i.e. B - A is positive semidefinite."""
    A = _as_symmetric(A, "A")
    B = _as_symmetric(B, "B")
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} differ")
    return is_psd(B - A, tol)


def trace_inner(A, B):
    """<A, B> = Tr(A B^T) = sum_ij A_ij B_ij."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} differ")
    return float(np.sum(A * B))


def sqrt_psd(A):
    A = _as_symmetric(A)
    if not is_psd(A, 1e-10 * (1.0 + float(np.max(np.abs(A), initial=0.0)))):
        raise NotPsd("matrix has a negative eigenvalue")
    w, v = eigh(A)
    S = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (S + S.T)
