"""
Dense matrix functions behind the exact solvers.

The exponential and logarithm delegate to scipy's scaling-and-squaring Pade
and inverse scaling-and-squaring implementations; this module adds the
domain checks, error reporting and the block-augmented exponential integral.
"""

import logging
import math
from typing import Tuple

import numpy as np
import scipy.linalg as la

from ecosystem._constants import (
    MF__BRANCH_CUT_TOL,
    MF__DENSE_FALLBACK_MAX_N,
    MF__EXPM_THETA_13,
    MF__LOGM_TOL,
    MF__POWER_MAX_ITER,
    MF__POWER_RESIDUAL_TOL,
    MF__POWER_TOL,
)
from ecosystem.exceptions import (
    BranchCutError,
    ConvergenceError,
    EigenvalueConvergenceError,
    MatrixOverflowError,
    PowerIterationError,
)
from ecosystem.models.results import MatFunResult

logger = logging.getLogger(__name__)


def _square(name: str, a) -> np.ndarray:
    array = np.asarray(a, dtype=float)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must have finite entries")
    return array


def expm(m) -> MatFunResult:
    """
    Matrix exponential e^m.

    Args:
        m: Square matrix with finite entries.

    Returns:
        MatFunResult: The exponential and a relative consistency estimate
        ||mE - Em|| / (||m|| ||E||), which vanishes in exact arithmetic.
    """
    m = _square("m", m)
    n = m.shape[0]
    if not np.any(m):
        return MatFunResult(value=np.eye(n), est_error=0.0)

    norm = float(np.linalg.norm(m, 1))
    with np.errstate(over="ignore", invalid="ignore"):
        value = la.expm(m)
    if not np.all(np.isfinite(value)):
        scaling = max(0, int(math.ceil(math.log2(norm / MF__EXPM_THETA_13))))
        raise MatrixOverflowError(scaling=scaling, norm=norm)

    value_norm = float(np.linalg.norm(value, 1))
    commutator = float(np.linalg.norm(m @ value - value @ m, 1))
    est_error = commutator / (norm * value_norm) if value_norm > 0.0 else 0.0
    return MatFunResult(value=value, est_error=est_error)


def expm_integral(m, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exponential and its integral over one step.

    E = e^{m dt} and B = int_0^dt e^{m tau} dtau are read off the exponential
    of the block matrix [[m, I], [0, 0]] dt, which needs no inverse of m.

    Args:
        m: Square matrix.
        dt (float): Step length, strictly positive.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (E, B).
    """
    m = _square("m", m)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = m.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = m * dt
    block[:n, n:] = np.eye(n) * dt
    full = expm(block).value
    return full[:n, :n], full[:n, n:]


def _on_branch_cut(eigenvalues: np.ndarray, scale: float) -> bool:
    tol = MF__BRANCH_CUT_TOL * max(1.0, scale)
    return bool(np.any((np.abs(eigenvalues.imag) <= tol) & (eigenvalues.real <= tol)))


def logm(a) -> np.ndarray:
    """
    Principal matrix logarithm of a real matrix.

    Raises:
        BranchCutError: An eigenvalue lies on the closed negative real axis.
        ConvergenceError: scipy's error estimate exceeds the tolerance.
    """
    a = _square("a", a)
    try:
        eigenvalues = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as e:
        raise EigenvalueConvergenceError(f"Eigenvalue iteration failed: {e}") from e
    if _on_branch_cut(eigenvalues, float(np.max(np.abs(eigenvalues)))):
        raise BranchCutError("Matrix has an eigenvalue on the closed negative real axis; no principal logarithm")

    if np.array_equal(a, np.eye(a.shape[0])):
        return np.zeros_like(a)

    value, errest = la.logm(a, disp=False)
    value = np.asarray(value)
    if np.iscomplexobj(value):
        if np.max(np.abs(value.imag)) > MF__LOGM_TOL * max(1.0, float(np.max(np.abs(value.real)))):
            raise BranchCutError("Principal logarithm is not real")
        value = value.real
    if not np.all(np.isfinite(value)) or not errest < MF__LOGM_TOL:
        raise ConvergenceError(f"Matrix logarithm did not converge (error estimate {errest:.3g})", residual=errest)
    return np.ascontiguousarray(value, dtype=float)


def spectral_abscissa(m) -> float:
    """Largest real part of the spectrum."""
    m = _square("m", m)
    try:
        return float(np.max(np.linalg.eigvals(m).real))
    except np.linalg.LinAlgError as e:
        raise EigenvalueConvergenceError(f"Eigenvalue iteration failed: {e}") from e


def _dense_perron(a: np.ndarray) -> Tuple[float, np.ndarray]:
    eigenvalues, vectors = np.linalg.eig(a)
    magnitude = np.abs(eigenvalues)
    candidates = np.flatnonzero(magnitude >= magnitude.max() * (1.0 - 1e-12))
    idx = candidates[np.argmax(eigenvalues[candidates].real)]
    vector = np.abs(vectors[:, idx].real)
    return float(eigenvalues[idx].real), vector / vector.sum()


def spectral_radius(a, max_iter: int = MF__POWER_MAX_ITER) -> Tuple[float, np.ndarray]:
    """
    Perron root and vector of a nonnegative matrix.

    Power iteration from the uniform vector, normalized to unit sum. Periodic
    (e.g. bipartite) matrices never settle; those fall back to a dense
    eigen-solve when n is small enough.

    Args:
        a: Nonnegative square matrix.
        max_iter (int): Iteration cap.

    Returns:
        Tuple[float, np.ndarray]: lambda_max and the nonnegative eigenvector (unit sum).
    """
    a = _square("a", a)
    if np.any(a < 0.0):
        raise ValueError("spectral_radius expects a nonnegative matrix")
    n = a.shape[0]
    x = np.full(n, 1.0 / n)
    if not np.any(a):
        return 0.0, x

    scale = float(np.linalg.norm(a, 1))
    lam = 0.0
    residual = np.inf
    for _ in range(max_iter):
        y = a @ x
        lam_new = float(y.sum())
        if lam_new == 0.0:
            break
        x = y / lam_new
        residual = float(np.linalg.norm(a @ x - lam_new * x, 1))
        if abs(lam_new - lam) < MF__POWER_TOL * max(1.0, lam_new) and residual <= MF__POWER_RESIDUAL_TOL * scale:
            return lam_new, x
        lam = lam_new

    if n <= MF__DENSE_FALLBACK_MAX_N:
        logger.info(f"Power iteration did not settle (residual {residual:.3g}); using dense eigen-solve")
        return _dense_perron(a)
    raise PowerIterationError(
        f"Power iteration did not converge in {max_iter} iterations (residual {residual:.3g})",
        residual=residual,
    )
