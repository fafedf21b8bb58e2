"""
Discrete-time identification of the influence dynamics.

Snapshots sampled every dt obey alpha_{k+1} = A alpha_k + B u_k with
A = e^{M dt} and B = int_0^dt e^{M tau} dtau. The pipeline fits (A, B) by
least squares, takes the principal logarithm of A and projects the result
onto the Metzler set; the sparse variant fits M directly with B tied to it.
"""

import logging
from datetime import datetime
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from ecosystem._constants import EST__PROX_MAX_ITER, EST__PROX_TOL, EST__RANK_TOL
from ecosystem.exceptions import (
    AliasingError,
    BranchCutError,
    ConvergenceError,
    DimensionMismatchError,
    IdentifiabilityError,
)
from ecosystem.matfun import expm, expm_integral, logm
from ecosystem.models.network import Generator
from ecosystem.models.results import DiscreteFit, FitResult, SnapshotSet
from ecosystem.utils import check_nonnegative

logger = logging.getLogger(__name__)


def simulate_discrete(m: Generator, u_seq, alpha0, dt: float, steps: int) -> SnapshotSet:
    """
    Exact sampled trajectory alpha_{k+1} = A alpha_k + B u_k.

    Args:
        m (Generator): Generator.
        u_seq: One n-vector held for every step, or one row per step
            (steps or steps + 1 rows).
        alpha0: Nonnegative initial state.
        dt (float): Sampling period.
        steps (int): Number of transitions.

    Returns:
        SnapshotSet: steps + 1 snapshots; inputs[k] is the push over [t_k, t_k + dt).
    """
    n = m.n
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    alpha0 = np.asarray(alpha0, dtype=float)
    if alpha0.shape != (n,):
        raise DimensionMismatchError(f"alpha0 must have length {n}")
    check_nonnegative("alpha0", alpha0)

    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim == 1:
        u_seq = np.tile(u_seq, (steps + 1, 1))
    elif u_seq.shape[0] == steps and steps > 0:
        u_seq = np.vstack([u_seq, u_seq[-1]])
    if u_seq.shape != (steps + 1, n):
        raise DimensionMismatchError(f"inputs must hold {steps} or {steps + 1} rows of length {n}")
    check_nonnegative("inputs", u_seq)

    states = np.empty((steps + 1, n))
    states[0] = alpha0
    if steps:
        A, B = expm_integral(m.matrix, dt)
        for k in range(steps):
            states[k + 1] = A @ states[k] + B @ u_seq[k]
    return SnapshotSet(dt=dt, states=states, inputs=u_seq)


def _regression(data: SnapshotSet) -> Tuple[np.ndarray, np.ndarray]:
    if data.steps < 1:
        raise IdentifiabilityError("At least two snapshots are needed to fit a transition")
    Z = np.hstack([data.states[:-1], data.inputs[:-1]])
    return Z, data.states[1:]


def fit_discrete(data: SnapshotSet, rank_tol: float = EST__RANK_TOL) -> DiscreteFit:
    """
    Least-squares fit of (A, B) from snapshot pairs.

    The regressor [alpha_k, u_k] must have full column rank up to rank_tol
    relative to its largest singular value. When the deficiency lies only in
    input directions (e.g. u = 0) A is still identified and B is reported as
    unidentifiable.

    Raises:
        IdentifiabilityError: The state part of the regressor is rank deficient;
            the deficient directions are attached.
    """
    Z, Y = _regression(data)
    n = data.n
    _, s, vt = np.linalg.svd(Z, full_matrices=True)
    singular_values = np.zeros(2 * n)
    singular_values[: s.size] = s
    largest = singular_values[0]
    deficient = np.flatnonzero(singular_values <= rank_tol * largest) if largest > 0.0 else np.arange(2 * n)
    directions = vt[deficient]

    b_identifiable = deficient.size == 0
    if not b_identifiable:
        state_part = np.linalg.norm(directions[:, :n], axis=1)
        if np.any(state_part > 1e-8):
            logger.error(f"Snapshot regressor is rank deficient in {deficient.size} directions")
            raise IdentifiabilityError(
                f"Regressor [alpha; u] is rank deficient ({deficient.size} directions below "
                f"{rank_tol:g} x largest singular value); excite the system more richly",
                directions=directions,
            )
        logger.warning("Input excitation is insufficient; B is not identifiable")

    theta, *_ = la.lstsq(Z, Y, cond=rank_tol)
    residual = Y - Z @ theta
    return DiscreteFit(
        A_hat=theta[:n].T,
        B_hat=theta[n:].T,
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        singular_values=singular_values,
        b_identifiable=b_identifiable,
        deficient_directions=directions if directions.size else None,
    )


def recover_generator(A_hat, dt: float) -> np.ndarray:
    """
    M = log(A) / dt on the principal branch.

    Raises:
        AliasingError: A has an eigenvalue on the closed negative real axis; sample faster.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    try:
        return logm(A_hat) / dt
    except BranchCutError as e:
        raise AliasingError(
            f"No real principal logarithm of A_hat ({e}); the sampling period dt={dt:g} aliases the dynamics, "
            "use a smaller dt"
        ) from e


def project_metzler(M_raw) -> Tuple[np.ndarray, float]:
    """Clip negative off-diagonal entries to zero; returns the projection and the largest clipped magnitude."""
    M = np.array(M_raw, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    off = ~np.eye(M.shape[0], dtype=bool)
    negative = off & (M < 0.0)
    violation = float(np.max(-M[negative])) if np.any(negative) else 0.0
    M[negative] = 0.0
    return M, violation


class _TiedObjective:
    """Least squares of the exact one-step map of M plus an off-diagonal l1 penalty."""

    def __init__(self, data: SnapshotSet, l1_weight: float):
        Z, Y = _regression(data)
        self.n = data.n
        self.dt = data.dt
        self.Z = Z.T
        self.Y = Y.T
        self.scale = 1.0 / (2.0 * Z.shape[0] * data.dt**2)
        self.l1_weight = l1_weight
        self.off = ~np.eye(self.n, dtype=bool)

    def _block(self, M: np.ndarray) -> np.ndarray:
        n = self.n
        block = np.zeros((2 * n, 2 * n))
        block[:n, :n] = M * self.dt
        block[:n, n:] = np.eye(n) * self.dt
        return block

    def maps(self, M: np.ndarray) -> np.ndarray:
        """[E(M) B(M)]."""
        return expm(self._block(M)).value[: self.n]

    def smooth(self, M: np.ndarray) -> float:
        residual = self.Y - self.maps(M) @ self.Z
        return self.scale * float(np.sum(residual**2))

    def gradient(self, M: np.ndarray) -> np.ndarray:
        n = self.n
        block = self._block(M)
        residual = self.Y - expm(block).value[:n] @ self.Z
        outer = np.zeros((2 * n, 2 * n))
        outer[:n] = -2.0 * self.scale * residual @ self.Z.T
        adjoint = la.expm_frechet(block.T, outer, compute_expm=False)
        return self.dt * adjoint[:n, :n]

    def penalty(self, M: np.ndarray) -> float:
        return self.l1_weight * float(np.sum(np.abs(M[self.off])))

    def prox(self, M: np.ndarray, step: float) -> np.ndarray:
        out = M.copy()
        out[self.off] = np.maximum(M[self.off] - step * self.l1_weight, 0.0)
        return out


def fit_sparse(
    data: SnapshotSet,
    l1_weight: float,
    max_iter: int = EST__PROX_MAX_ITER,
    tol: float = EST__PROX_TOL,
    rank_tol: float = EST__RANK_TOL,
) -> FitResult:
    """
    Metzler generator fit with an l1 penalty on the off-diagonals.

    Minimizes (1 / (2 K dt^2)) sum_k ||alpha_{k+1} - E(M) alpha_k - B(M) u_k||^2
    + l1_weight sum_{i != j} |M_ij| over M with nonnegative off-diagonals,
    where E and B are the exact one-step maps of M. Proximal gradient with
    backtracking, started from the projected unregularized estimate; the
    gradient is the adjoint Frechet derivative of the block exponential.

    Args:
        data (SnapshotSet): Uniform snapshots.
        l1_weight (float): Penalty weight, >= 0.
        max_iter (int): Iteration cap.
        tol (float): Relative objective change at convergence.
        rank_tol (float): Identifiability threshold for the initial estimate.

    Returns:
        FitResult: Tied (A, B), the Metzler M and diagnostics.

    Raises:
        ConvergenceError: No convergence within max_iter iterations.
    """
    if l1_weight < 0.0:
        raise ValueError(f"l1_weight must be >= 0, got {l1_weight}")
    start_time = datetime.now()
    initial = fit_discrete(data, rank_tol)
    M, violation = project_metzler(recover_generator(initial.A_hat, data.dt))

    objective = _TiedObjective(data, l1_weight)
    smooth = objective.smooth(M)
    value = smooth + objective.penalty(M)
    step = 1.0
    for iteration in range(1, max_iter + 1):
        grad = objective.gradient(M)
        while True:
            candidate = objective.prox(M - step * grad, step)
            diff = candidate - M
            candidate_smooth = objective.smooth(candidate)
            if candidate_smooth <= smooth + float(np.sum(grad * diff)) + float(np.sum(diff**2)) / (2.0 * step) + 1e-300:
                break
            step *= 0.5
            if step < 1e-20:
                break

        candidate_value = candidate_smooth + objective.penalty(candidate)
        change = abs(value - candidate_value)
        M, smooth, value = candidate, candidate_smooth, candidate_value
        if change <= tol * max(abs(value), np.finfo(float).tiny) or not np.any(diff):
            logger.info(
                f"Sparse fit converged in {iteration} iterations "
                f"({(datetime.now() - start_time).total_seconds():.2f} seconds)"
            )
            maps = objective.maps(M)
            residual = data.states[1:].T - maps @ objective.Z
            return FitResult(
                A_hat=maps[:, : data.n],
                B_hat=maps[:, data.n :],
                M_hat=M,
                residual_rms=float(np.sqrt(np.mean(residual**2))),
                metzler_violation=violation,
                l1_weight=l1_weight,
                iterations=iteration,
            )
        step *= 1.5

    logger.error(f"Sparse fit did not converge in {max_iter} iterations")
    raise ConvergenceError(f"Proximal gradient did not converge in {max_iter} iterations", residual=value)


def identify(data: SnapshotSet, l1_weight: float = 0.0, rank_tol: float = EST__RANK_TOL) -> FitResult:
    """fit_discrete -> recover_generator -> project_metzler, or fit_sparse when l1_weight > 0."""
    if l1_weight > 0.0:
        return fit_sparse(data, l1_weight, rank_tol=rank_tol)
    fit = fit_discrete(data, rank_tol)
    M, violation = project_metzler(recover_generator(fit.A_hat, data.dt))
    if violation:
        logger.warning(f"Projected recovered generator onto the Metzler set (largest clip {violation:.3g})")
    return FitResult(
        A_hat=fit.A_hat,
        B_hat=fit.B_hat,
        M_hat=M,
        residual_rms=fit.residual_rms,
        metzler_violation=violation,
    )


def fit_windows(
    data: SnapshotSet, window: int, stride: Optional[int] = None, l1_weight: float = 0.0
) -> List[FitResult]:
    """Identify one constant generator per window of `window` transitions."""
    if window < 1:
        raise ValueError("window must contain at least one transition")
    stride = stride or window
    fits = []
    for start in range(0, data.steps - window + 1, stride):
        chunk = SnapshotSet(
            dt=data.dt,
            states=data.states[start : start + window + 1],
            inputs=data.inputs[start : start + window + 1],
            t0=data.t0 + start * data.dt,
        )
        fits.append(identify(chunk, l1_weight))
    return fits


def add_measurement_noise(data: SnapshotSet, sigma: float, seed: int = 0) -> SnapshotSet:
    """Additive i.i.d. uniform noise on [-sigma, sigma], clipped at zero."""
    rng = np.random.default_rng(seed)
    noisy = data.states + rng.uniform(-sigma, sigma, size=data.states.shape)
    return SnapshotSet(dt=data.dt, states=np.maximum(noisy, 0.0), inputs=data.inputs, t0=data.t0)
