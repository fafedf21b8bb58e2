"""
Bounded dynamics: the saturating product model and the SIS adoption layer.

Both systems are integrated with classical fixed-step RK4. States are clipped
to [0, 1]; clipping beyond rounding is counted and reported, and a run whose
clamp count exceeds a small fraction of right-hand-side evaluations is
rejected.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, wait
from datetime import datetime
from typing import Callable, List, Optional, Tuple

import numpy as np

from ecosystem._constants import (
    NL__EXTINCTION_TOL,
    NL__MAX_CLAMP_FRACTION,
    NL__MIN_CHURN_TIMES,
    NL__SETTLE_TOL,
    NL__SETTLE_WINDOW,
    NL__STEP_FACTOR,
    NL__SWEEP_CHUNK,
    POSITIVITY_TOL,
    THREAD_POOL_SIZE,
)
from ecosystem.exceptions import ConvergenceError, DimensionMismatchError, StateRangeError, StepSizeError
from ecosystem.matfun import spectral_radius
from ecosystem.models.network import AdoptionSystem, CrowdingMatrix, DecayVector, InteractionMatrix
from ecosystem.models.results import PersistenceResult, SweepPoint, SweepResult, Trajectory

logger = logging.getLogger(__name__)


def _unit_box(name: str, x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise DimensionMismatchError(f"{name} must have length {n}, got shape {x.shape}")
    if np.any(x < -POSITIVITY_TOL) or np.any(x > 1.0 + POSITIVITY_TOL):
        raise StateRangeError(f"{name} must lie in [0, 1]")
    return x


class _ClampedRK4:
    """Fixed-step RK4 on [0, 1]^n with clamp accounting."""

    def __init__(self, rhs: Callable[[np.ndarray], np.ndarray], horizon: float, step: float):
        if not step > 0.0:
            raise ValueError(f"step must be positive, got {step}")
        if horizon < 0.0:
            raise ValueError(f"horizon must be >= 0, got {horizon}")
        self.rhs = rhs
        self.steps = max(1, int(math.ceil(horizon / step - 1e-9))) if horizon > 0.0 else 0
        self.h = horizon / self.steps if self.steps else 0.0
        self.clamp_events = 0
        self.evaluations = 0

    def _clip(self, x: np.ndarray) -> np.ndarray:
        if np.any(x < -POSITIVITY_TOL) or np.any(x > 1.0 + POSITIVITY_TOL):
            self.clamp_events += 1
        return np.clip(x, 0.0, 1.0)

    def _eval(self, x: np.ndarray) -> np.ndarray:
        self.evaluations += 1
        return self.rhs(self._clip(x))

    def advance(self, x: np.ndarray) -> np.ndarray:
        h = self.h
        k1 = self._eval(x)
        k2 = self._eval(x + 0.5 * h * k1)
        k3 = self._eval(x + 0.5 * h * k2)
        k4 = self._eval(x + h * k3)
        return self._clip(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))

    def check(self) -> None:
        if self.clamp_events:
            logger.warning(f"Clamped {self.clamp_events} states over {self.evaluations} evaluations")
        if self.clamp_events > NL__MAX_CLAMP_FRACTION * max(self.evaluations, 1):
            raise StepSizeError(self.clamp_events, self.evaluations)


def saturating_rhs(
    alpha, lam: InteractionMatrix, delta: DecayVector, c: CrowdingMatrix
) -> np.ndarray:
    """
    (1 - alpha_i) sum_j Lambda_ij alpha_j - delta_i alpha_i - sum_j c_ij alpha_i alpha_j.

    Raises:
        StateRangeError: alpha leaves [0, 1].
    """
    alpha = _unit_box("alpha", alpha, lam.n)
    return _saturating_field(lam.entries, delta.rates, c.entries)(alpha)


def _saturating_field(lam: np.ndarray, rates: np.ndarray, crowding: np.ndarray):
    def rhs(alpha: np.ndarray) -> np.ndarray:
        return (1.0 - alpha) * (lam @ alpha) - rates * alpha - alpha * (crowding @ alpha)

    return rhs


def integrate_saturating(
    lam: InteractionMatrix,
    delta: DecayVector,
    c: CrowdingMatrix,
    alpha0,
    horizon: float,
    step: Optional[float] = None,
    t0: float = 0.0,
) -> Trajectory:
    """
    Fixed-step RK4 trajectory of the saturating model.

    Args:
        lam (InteractionMatrix): Enhancement rates.
        delta (DecayVector): Decay rates.
        c (CrowdingMatrix): Crowding penalties.
        alpha0: Initial state in [0, 1]^n.
        horizon (float): Integration length.
        step (Optional[float]): Step length; defaults to 0.01 / max(max delta, rho(Lambda)).
        t0 (float): Time stamp of alpha0.

    Returns:
        Trajectory: Every step, mode "saturating", with the clamp count.
    """
    n = lam.n
    if len(delta) != n or c.entries.shape != (n, n):
        raise DimensionMismatchError("Lambda, delta and c must share the same dimension")
    state = _unit_box("alpha0", alpha0, n)
    if step is None:
        rho, _ = spectral_radius(lam.entries)
        step = NL__STEP_FACTOR / max(float(np.max(delta.rates)), rho)

    integrator = _ClampedRK4(_saturating_field(lam.entries, delta.rates, c.entries), horizon, step)
    states = np.empty((integrator.steps + 1, n))
    states[0] = state
    for k in range(1, integrator.steps + 1):
        state = integrator.advance(state)
        states[k] = state
    integrator.check()

    times = t0 + integrator.h * np.arange(integrator.steps + 1)
    return Trajectory(times=times, states=states, mode="saturating", clamp_events=integrator.clamp_events)


def sis_rhs(x, sys: AdoptionSystem) -> np.ndarray:
    """beta (1 - x_i) sum_j A_ij x_j - delta x_i."""
    x = _unit_box("x", x, sys.size)
    return sys.beta * (1.0 - x) * (sys.adjacency @ x) - sys.delta * x


def critical_tau(adjacency) -> float:
    """
    Adoption pressure threshold 1 / lambda_max(A).

    Returns:
        float: The threshold, or inf when A has zero spectral radius.
    """
    rho, _ = spectral_radius(adjacency)
    if rho == 0.0:
        logger.info("Adjacency has zero spectral radius; no adoption pressure sustains persistence")
        return math.inf
    return 1.0 / rho


def _sis_batch(
    adjacency: np.ndarray,
    betas: np.ndarray,
    delta: float,
    x0: np.ndarray,
    horizon: float,
    step: float,
) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """Integrate one SIS system per beta at once; returns x(T), x(T - window), clamps, evaluations."""
    A_T = adjacency.T
    scale = betas[:, None]

    def rhs(x: np.ndarray) -> np.ndarray:
        return scale * (1.0 - x) * (x @ A_T) - delta * x

    integrator = _ClampedRK4(rhs, horizon, step)
    checkpoint = int(round((1.0 - NL__SETTLE_WINDOW) * integrator.steps))
    state = np.broadcast_to(x0, (betas.size, x0.size)).copy()
    settled_from = state.copy()
    for k in range(1, integrator.steps + 1):
        state = integrator.advance(state)
        if k == checkpoint:
            settled_from = state.copy()
    integrator.check()
    return state, settled_from, integrator.clamp_events, integrator.evaluations


def _status(final: np.ndarray, earlier: np.ndarray, extinction_tol: float) -> Tuple[str, float, float]:
    norm = float(np.max(np.abs(final)))
    if norm < extinction_tol:
        return "extinct", norm, float("nan")
    change = float(np.max(np.abs(final - earlier))) / norm
    return ("persistent" if change < NL__SETTLE_TOL else "inconclusive"), norm, change


def _default_step(rho: float, beta: float, delta: float) -> float:
    return NL__STEP_FACTOR / max(delta, beta * rho)


def classify_persistence(
    sys: AdoptionSystem,
    x0,
    horizon: float,
    extinction_tol: float = NL__EXTINCTION_TOL,
    step: Optional[float] = None,
) -> PersistenceResult:
    """
    Integrate the SIS layer and classify its long-run behavior.

    Extinct when ||x(T)||_inf < extinction_tol; persistent when the relative
    change over the last tenth of the horizon is below 1e-9; inconclusive
    otherwise, in which case the caller should extend the horizon.

    Args:
        sys (AdoptionSystem): Adjacency, adoption and churn rates.
        x0: Nonzero initial adoption in [0, 1]^N.
        horizon (float): Integration length, at least 20 / delta.
        extinction_tol (float): Extinction threshold.
        step (Optional[float]): RK4 step; defaults to 0.01 / max(delta, beta rho(A)).

    Returns:
        PersistenceResult: Status, final state and diagnostics.
    """
    x0 = _unit_box("x0", np.broadcast_to(np.asarray(x0, dtype=float), (sys.size,)), sys.size)
    if not np.any(x0 > 0.0):
        raise StateRangeError("x0 must be nonzero")
    if horizon < NL__MIN_CHURN_TIMES / sys.delta:
        raise ValueError(f"horizon must cover at least {NL__MIN_CHURN_TIMES:g} churn time-constants")

    if step is None:
        rho, _ = spectral_radius(sys.adjacency)
        step = _default_step(rho, sys.beta, sys.delta)
    final, earlier, _, _ = _sis_batch(sys.adjacency, np.array([sys.beta]), sys.delta, x0, horizon, step)
    status, norm, change = _status(final[0], earlier[0], extinction_tol)
    return PersistenceResult(status=status, final_state=final[0], final_norm=norm, relative_change=change)


def _sweep_chunk(
    adjacency: np.ndarray,
    taus: np.ndarray,
    delta: float,
    x0: np.ndarray,
    horizon: float,
    extinction_tol: float,
    step: float,
) -> List[SweepPoint]:
    final, earlier, _, _ = _sis_batch(adjacency, taus * delta, delta, x0, horizon, step)
    points = []
    for tau, xf, xe in zip(taus, final, earlier):
        status, norm, _ = _status(xf, xe, extinction_tol)
        points.append(SweepPoint(tau=float(tau), status=status, final_norm=norm))
    return points


def _bracket(points: List[SweepPoint]) -> Tuple[bool, Optional[Tuple[float, float]]]:
    definite = [p for p in points if p.status != "inconclusive"]
    flips = [
        (a, b) for a, b in zip(definite[:-1], definite[1:]) if a.status != b.status
    ]
    monotone = all(a.status == "extinct" and b.status == "persistent" for a, b in flips) and len(flips) <= 1
    if monotone and flips:
        return True, (flips[0][0].tau, flips[0][1].tau)
    return monotone, None


def sweep_tau(
    adjacency,
    tau_grid,
    x0,
    horizon: float,
    extinction_tol: float = NL__EXTINCTION_TOL,
    step: Optional[float] = None,
    delta: float = 1.0,
    workers: int = THREAD_POOL_SIZE,
) -> SweepResult:
    """
    Phase sweep over adoption pressure with beta = tau * delta.

    Grid points are integrated in vectorized chunks on a thread pool and
    merged back in grid order. The result carries the transition bracket,
    the spectral threshold and a flag for non-monotone classifications.

    Args:
        adjacency: Nonnegative N x N matrix.
        tau_grid: Strictly increasing positive pressures.
        x0: Initial adoption (scalar or N-vector).
        horizon (float): Integration length per point.
        extinction_tol (float): Extinction threshold.
        step (Optional[float]): RK4 step shared by every point.
        delta (float): Churn rate, 1 by default.
        workers (int): Thread pool size.

    Returns:
        SweepResult: Points in grid order, critical tau and bracket.
    """
    start_time = datetime.now()
    sys = AdoptionSystem(adjacency=adjacency, beta=0.0, delta=delta)
    A = sys.adjacency
    grid = np.asarray(tau_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
        raise ValueError("tau grid must be a nonempty, strictly increasing sequence of positive values")
    x0 = _unit_box("x0", np.broadcast_to(np.asarray(x0, dtype=float), (sys.size,)), sys.size)
    if not np.any(x0 > 0.0):
        raise StateRangeError("x0 must be nonzero")
    if horizon < NL__MIN_CHURN_TIMES / delta:
        raise ValueError(f"horizon must cover at least {NL__MIN_CHURN_TIMES:g} churn time-constants")

    rho, _ = spectral_radius(A)
    tau_c = 1.0 / rho if rho > 0.0 else math.inf
    if step is None:
        step = _default_step(rho, float(grid[-1]) * delta, delta)
    logger.info(f"Sweeping {grid.size} tau values on {sys.size} nodes (step {step:.3g}, horizon {horizon:g})")

    chunks = [grid[i : i + NL__SWEEP_CHUNK] for i in range(0, grid.size, NL__SWEEP_CHUNK)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = [
            executor.submit(_sweep_chunk, A, chunk, delta, x0, horizon, extinction_tol, step) for chunk in chunks
        ]
        wait(futures)
        points = [p for future in futures for p in future.result()]

    monotone, bracket = _bracket(points)
    if not monotone:
        logger.warning("Sweep classification is not monotone in tau; refine the step or extend the horizon")
    inconclusive = sum(p.status == "inconclusive" for p in points)
    if inconclusive:
        logger.warning(f"{inconclusive} sweep points were inconclusive at horizon {horizon:g}")

    logger.info(f"Finished sweep in {(datetime.now() - start_time).total_seconds():.2f} seconds")
    return SweepResult(points=tuple(points), critical_tau=tau_c, bracket=bracket, monotone=monotone)


def refine_threshold(
    adjacency,
    lo: float,
    hi: float,
    width: float,
    x0,
    horizon: float,
    extinction_tol: float = NL__EXTINCTION_TOL,
    step: Optional[float] = None,
    delta: float = 1.0,
) -> Tuple[float, float]:
    """
    Bisect an (extinct, persistent) bracket down to the requested width.

    Raises:
        ValueError: lo is not extinct or hi is not persistent.
        ConvergenceError: A midpoint was inconclusive; extend the horizon.
    """
    A = np.asarray(adjacency, dtype=float)
    if step is None:
        rho, _ = spectral_radius(A)
        step = _default_step(rho, hi * delta, delta)

    def classify(tau: float) -> str:
        sys = AdoptionSystem(adjacency=A, beta=tau * delta, delta=delta)
        return classify_persistence(sys, x0, horizon, extinction_tol, step).status

    if classify(lo) != "extinct" or classify(hi) != "persistent":
        raise ValueError(f"[{lo}, {hi}] does not bracket the extinct/persistent transition")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        status = classify(mid)
        if status == "inconclusive":
            raise ConvergenceError(f"classification inconclusive at tau={mid:.6g}; extend the horizon")
        lo, hi = (mid, hi) if status == "extinct" else (lo, mid)
    return lo, hi
