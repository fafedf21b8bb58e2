"""
Exact solution tiers for d(alpha)/dt = M(t) alpha + u(t).

Constant generators use the block-augmented exponential integral, schedules
chain it across segments, and fully time-varying paths go through the
state-transition matrix (Peano-Baker series, midpoint product rule, or the
exponential of the integrated generator when the path commutes).
"""

import logging
import math
from datetime import datetime
from typing import Optional, Tuple

import numpy as np

from ecosystem._constants import (
    SOL__INPUT_PANELS,
    SOL__MIN_SUBSTEPS,
    SOL__PB_MAX_TERMS,
    SOL__PB_PANELS,
    SOL__PB_TOL,
    SOL__STEP_NORM_BOUND,
)
from ecosystem.exceptions import DimensionMismatchError, ModelError, PeanoBakerConvergenceError
from ecosystem.matfun import expm, expm_integral
from ecosystem.models.network import Generator
from ecosystem.models.results import TransitionMatrix, Trajectory
from ecosystem.models.signals import GeneratorPath, InputSignal, Schedule, Segment
from ecosystem.utils import check_nonnegative, gauss_legendre_panels, merge_times, split_interval, subdivide

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


def _partial_weights() -> np.ndarray:
    """W[i, l] = integral of the l-th Lagrange basis over [-1, node_i]."""
    poly = np.polynomial.polynomial
    weights = np.empty((3, 3))
    for l in range(3):
        others = np.delete(_GL_NODES, l)
        basis = poly.polyfromroots(others) / np.prod(_GL_NODES[l] - others)
        primitive = poly.polyint(basis, lbnd=-1.0)
        weights[:, l] = poly.polyval(_GL_NODES, primitive)
    return weights


_GL_PARTIAL = _partial_weights()


def _as_state(name: str, value, n: int) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.shape != (n,):
        raise DimensionMismatchError(f"{name} must have length {n}, got shape {array.shape}")
    check_nonnegative(name, array)
    return array


def check_grid(t_grid) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("time grid must be a nonempty vector")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def scalar_flow(rates: np.ndarray, x0: np.ndarray, u: InputSignal, t_grid: np.ndarray) -> np.ndarray:
    """Componentwise closed form of dx_i/dt = a_i x_i + u_i(t) on a grid."""
    states = np.empty((t_grid.size, rates.size))
    x = np.array(x0, dtype=float)
    states[0] = x
    for k, (a, b) in enumerate(zip(t_grid[:-1], t_grid[1:]), start=1):
        for lo, hi, push in u.pieces(a, b):
            h = hi - lo
            z = rates * h
            gain = np.where(rates != 0.0, np.expm1(z) / np.where(rates != 0.0, rates, 1.0), h)
            x = np.exp(z) * x + gain * push
        states[k] = x
    return states


def solve_scalar(a: float, x0: float, u: InputSignal, t_grid) -> np.ndarray:
    """
    Scalar warm-up dx/dt = a x + u(t), x(t_grid[0]) = x0.

    Each constant piece of u is integrated in closed form, so the result is
    exact up to rounding.

    Returns:
        np.ndarray: x at every grid time.
    """
    grid = check_grid(t_grid)
    if u.n != 1:
        raise DimensionMismatchError("solve_scalar expects a scalar input signal")
    return scalar_flow(np.array([float(a)]), np.array([float(x0)]), u, grid)[:, 0]


def solve_constant(m: Generator, alpha0, u0, dt: float) -> np.ndarray:
    """
    Duhamel solution for constant M and u over a horizon dt.

    Args:
        m (Generator): Generator, possibly singular.
        alpha0: Nonnegative initial state.
        u0: Nonnegative constant input.
        dt (float): Horizon, dt >= 0.

    Returns:
        np.ndarray: e^{M dt} alpha0 + (int_0^dt e^{M tau} dtau) u0.
    """
    alpha0 = _as_state("alpha0", alpha0, m.n)
    u0 = _as_state("u0", u0, m.n)
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if dt == 0.0:
        return alpha0.copy()
    E, B = expm_integral(m.matrix, dt)
    return E @ alpha0 + B @ u0


def step_piecewise(segment: Segment, alpha_in) -> np.ndarray:
    return solve_constant(segment.generator, alpha_in, segment.input, segment.duration)


def sample_times(t0: float, t_end: float, sample_dt: float, boundaries=()) -> np.ndarray:
    """Uniform samples t0 + k sample_dt up to t_end, plus t_end and every boundary."""
    if not sample_dt > 0.0:
        raise ValueError(f"sample_dt must be positive, got {sample_dt}")
    scale = max(1.0, abs(t0), abs(t_end))
    count = int(math.floor((t_end - t0) / sample_dt + 1e-9))
    uniform = t0 + sample_dt * np.arange(count + 1)
    anchors = np.array([t0, *boundaries, t_end], dtype=float)
    near = np.min(np.abs(uniform[:, None] - anchors[None, :]), axis=1) <= 1e-12 * scale
    return merge_times(anchors, uniform[~near])


def solve_schedule(schedule: Schedule, alpha0, sample_dt: float) -> Trajectory:
    """
    Time-ordered chaining of the segment updates.

    Boundary states are chained exactly; interior samples are re-solved from
    the last boundary so errors do not accumulate within a segment.
    Consecutive identical segments are merged first.

    Args:
        schedule (Schedule): Contiguous piecewise-constant segments.
        alpha0: Nonnegative state at schedule.t0.
        sample_dt (float): Uniform sampling period.

    Returns:
        Trajectory: Samples on the uniform grid and at every segment boundary.
    """
    start_time = datetime.now()
    merged = schedule.coalesced()
    state = _as_state("alpha0", alpha0, merged.n)
    times = sample_times(merged.t0, merged.t_end, sample_dt, merged.boundaries[1:-1])

    states = np.empty((times.size, merged.n))
    cursor = 0
    scale = max(1.0, abs(merged.t_end))
    for idx, segment in enumerate(merged.segments):
        last = idx == len(merged.segments) - 1
        while cursor < times.size and (last or times[cursor] < segment.t_end - 1e-12 * scale):
            offset = max(0.0, times[cursor] - segment.t_start)
            states[cursor] = solve_constant(segment.generator, state, segment.input, min(offset, segment.duration))
            cursor += 1
        state = step_piecewise(segment, state)

    logger.debug(
        f"Solved schedule of {len(merged.segments)} segments at {times.size} samples "
        f"in {(datetime.now() - start_time).total_seconds():.3f} seconds"
    )
    return Trajectory(times=times, states=states, mode="linear")


def _panels(a: float, b: float, panels: int, breakpoints) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss nodes (P, 3) and half widths (P,) of a composite rule on [a, b]."""
    edges = split_interval(a, b, breakpoints)
    total = b - a
    nodes, halves = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(1, int(round(panels * (hi - lo) / total)))
        grid = np.linspace(lo, hi, count + 1)
        half = 0.5 * np.diff(grid)
        mid = 0.5 * (grid[:-1] + grid[1:])
        nodes.append(mid[:, None] + half[:, None] * _GL_NODES[None, :])
        halves.append(half)
    return np.concatenate(nodes), np.concatenate(halves)


def transition_matrix_pb(
    path: GeneratorPath,
    t0: float,
    t: float,
    tol: float = SOL__PB_TOL,
    max_terms: int = SOL__PB_MAX_TERMS,
    panels: int = SOL__PB_PANELS,
) -> TransitionMatrix:
    """
    Peano-Baker series I + int M + int M int M + ... truncated at a term norm below tol.

    Nested integrals use composite 3-point Gauss-Legendre panels; the inner
    cumulative integral at each node integrates the panel's interpolant.

    Raises:
        PeanoBakerConvergenceError: The series did not converge within max_terms;
            the interval should be subdivided.
    """
    if t < t0:
        raise ValueError("Peano-Baker series needs t >= t0")
    n = path.n
    identity = np.eye(n)
    if t == t0:
        return TransitionMatrix(t_from=t0, t_to=t, matrix=identity)

    nodes, half = _panels(t0, t, panels, path.breakpoints)
    Ms = np.stack([[path.matrix(x) for x in row] for row in nodes])
    previous = np.broadcast_to(identity, Ms.shape)
    phi = identity.copy()
    term_norm = np.inf
    for _ in range(max_terms):
        F = Ms @ previous
        panel_integrals = np.einsum("l,plij->pij", _GL_WEIGHTS, F) * half[:, None, None]
        cumulative = np.cumsum(panel_integrals, axis=0)
        partial = np.einsum("il,plab->piab", _GL_PARTIAL, F) * half[:, None, None, None]
        previous = (cumulative - panel_integrals)[:, None, :, :] + partial
        term = cumulative[-1]
        phi += term
        term_norm = float(np.linalg.norm(term, 1))
        if term_norm < tol:
            return TransitionMatrix(t_from=t0, t_to=t, matrix=phi)

    raise PeanoBakerConvergenceError(
        f"Peano-Baker series did not converge on [{t0}, {t}] within {max_terms} terms "
        f"(last term norm {term_norm:.3g}); subdivide the interval",
        residual=term_norm,
    )


def transition_matrix_product(path: GeneratorPath, t0: float, t: float, substeps: int) -> TransitionMatrix:
    """
    Midpoint product rule: time-ordered product of expm(M(midpoint) h), latest on the left.

    Sub-intervals never straddle a path breakpoint, so piecewise-constant
    paths are reproduced exactly.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if t < t0:
        raise ValueError("transition matrices need t >= t0")
    phi = np.eye(path.n)
    if t == t0:
        return TransitionMatrix(t_from=t0, t_to=t, matrix=phi)

    edges = split_interval(t0, t, path.breakpoints)
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(1, int(round(substeps * (hi - lo) / (t - t0))))
        grid = np.linspace(lo, hi, count + 1)
        for a, b in zip(grid[:-1], grid[1:]):
            phi = expm(path.matrix(0.5 * (a + b)) * (b - a)).value @ phi
    return TransitionMatrix(t_from=t0, t_to=t, matrix=phi)


def default_substeps(path: GeneratorPath, t0: float, t: float, min_substeps: int = SOL__MIN_SUBSTEPS) -> int:
    """Smallest count with h * max||M|| <= 0.5, never below min_substeps."""
    bound = (t - t0) * path.max_norm(t0, t) / SOL__STEP_NORM_BOUND
    return max(min_substeps, int(math.ceil(bound)))


def transition_matrix(
    path: GeneratorPath,
    t0: float,
    t: float,
    method: str = "auto",
    tol: float = SOL__PB_TOL,
    substeps: Optional[int] = None,
    min_substeps: int = SOL__MIN_SUBSTEPS,
    max_terms: int = SOL__PB_MAX_TERMS,
) -> TransitionMatrix:
    """
    Phi(t, t0) by the requested method.

    Args:
        path (GeneratorPath): Generator path.
        t0 (float): Start time.
        t (float): End time.
        method (str): "auto", "commuting", "peano_baker" or "product". "auto"
            uses the commuting exponential when the path carries the hint and
            the product rule otherwise.
        tol (float): Peano-Baker truncation tolerance.
        substeps (Optional[int]): Product-rule substeps; defaults to the norm rule.
        min_substeps (int): Lower bound for the default substep count.
        max_terms (int): Peano-Baker term cap per panel.

    Returns:
        TransitionMatrix: Phi(t, t0).
    """
    if method == "auto":
        method = "commuting" if path.commuting_hint else "product"

    if t == t0:
        return TransitionMatrix(t_from=t0, t_to=t, matrix=np.eye(path.n))
    if method == "commuting":
        return TransitionMatrix(t_from=t0, t_to=t, matrix=expm(path.integrate(t0, t)).value)
    if method == "product":
        count = substeps or default_substeps(path, t0, t, min_substeps)
        return transition_matrix_product(path, t0, t, count)
    if method == "peano_baker":
        norm = path.max_norm(t0, t)
        width = SOL__STEP_NORM_BOUND / norm if norm > 0.0 else t - t0
        edges = subdivide(split_interval(t0, t, path.breakpoints), width)
        result = TransitionMatrix(t_from=t0, t_to=t0, matrix=np.eye(path.n))
        for a, b in zip(edges[:-1], edges[1:]):
            result = transition_matrix_pb(path, a, b, tol=tol, max_terms=max_terms).compose(result)
        return result
    raise ValueError(f"unknown transition method {method!r}")


def _commuting_panel(path: GeneratorPath, a: float, b: float, push: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Phi(b, a) and int_a^b Phi(b, s) push ds for a commuting path."""
    phi = expm(path.integrate(a, b)).value
    if not np.any(push):
        return phi, np.zeros_like(push)
    nodes, weights = gauss_legendre_panels(a, b, SOL__INPUT_PANELS)
    forced = sum(w * (expm(path.integrate(s, b)).value @ push) for s, w in zip(nodes, weights))
    return phi, forced


def solve_time_varying(
    path: GeneratorPath,
    u: InputSignal,
    alpha0,
    t_grid,
    method: str = "auto",
    tol: float = SOL__PB_TOL,
    substeps: Optional[int] = None,
    max_terms: int = SOL__PB_MAX_TERMS,
) -> Trajectory:
    """
    alpha(t) = Phi(t, t0) alpha0 + int Phi(t, s) u(s) ds on a time grid.

    The horizon is cut at grid times and at every jump of M or u, then into
    panels with h * max||M|| <= 0.5. Each panel's transition is computed once
    and chained by the composition rule. On a panel the input is constant, so
    the forced response is the last column of the transition matrix of the
    augmented generator [[M(t), u], [0, 0]]. Commuting paths use the
    exponential of the integrated generator and Gauss quadrature for the
    forced response.

    Args:
        path (GeneratorPath): Metzler generator path covering the grid.
        u (InputSignal): Nonnegative piecewise-constant input.
        alpha0: Nonnegative state at t_grid[0].
        t_grid: Strictly increasing sample times.
        method (str): Transition method, see transition_matrix.
        tol (float): Peano-Baker tolerance.
        substeps (Optional[int]): Product-rule substeps per panel.
        max_terms (int): Peano-Baker term cap per panel.

    Returns:
        Trajectory: States at the grid times.
    """
    grid = check_grid(t_grid)
    n = path.n
    state = _as_state("alpha0", alpha0, n)
    if u.n != n:
        raise DimensionMismatchError(f"input has dimension {u.n}, path has {n}")
    scale = max(1.0, abs(path.t0), abs(path.t_end))
    if grid[0] < path.t0 - 1e-12 * scale or grid[-1] > path.t_end + 1e-12 * scale:
        raise ModelError("time grid must lie inside the path domain")

    if method == "auto":
        method = "commuting" if path.commuting_hint else "product"

    a, b = float(grid[0]), float(grid[-1])
    jumps = [t for t in (*path.breakpoints, *u.breakpoints) if a < t < b]
    norm = path.max_norm(a, b) if b > a else 0.0
    width = SOL__STEP_NORM_BOUND / norm if norm > 0.0 else b - a
    edges = subdivide(merge_times(grid, jumps), width) if b > a else grid

    states = np.empty((grid.size, n))
    states[0] = state
    target = 1
    grid_scale = max(1.0, abs(a), abs(b))
    for lo, hi in zip(edges[:-1], edges[1:]):
        push = u.at(0.5 * (lo + hi))
        if method == "commuting":
            phi, forced = _commuting_panel(path, lo, hi, push)
            state = phi @ state + forced
        else:
            augmented = path.augmented(push)
            phi = transition_matrix(
                augmented, lo, hi, method=method, tol=tol, substeps=substeps, max_terms=max_terms
            ).matrix
            state = phi[:n, :n] @ state + phi[:n, n]
        while target < grid.size and abs(grid[target] - hi) <= 1e-12 * grid_scale:
            states[target] = state
            target += 1

    return Trajectory(times=grid, states=states, mode="linear")
