"""
Amplification, perception and sensitivity measures built on the exact solvers.
"""

import logging
import math
from datetime import datetime
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from ecosystem._constants import AN__AMPLIFICATION_TOL, AN__BASELINE_FLOOR, AN__QUADRATURE_TOL, SOL__INPUT_PANELS
from ecosystem.exceptions import DimensionMismatchError, GridMismatchError, SaturationError, ZeroBaselineError
from ecosystem.matfun import expm_integral
from ecosystem.models.network import DecayVector, Generator
from ecosystem.models.results import (
    AmplificationReport,
    EdgeROI,
    PerceptionParams,
    PolicyDerivative,
    SensitivityReport,
    Trajectory,
)
from ecosystem.models.signals import GeneratorPath, InputSignal, Schedule
from ecosystem.solvers import check_grid, scalar_flow, solve_schedule, transition_matrix
from ecosystem.utils import check_nonnegative, gauss_legendre_panels, split_interval, trapezoid_with_estimate

logger = logging.getLogger(__name__)


def _weights(w, n: int) -> np.ndarray:
    w = np.full(n, 1.0 / n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise DimensionMismatchError(f"weights must have length {n}, got shape {w.shape}")
    check_nonnegative("weights", w, tol=0.0)
    if not np.any(w > 0.0):
        raise ValueError("weights must not be all zero")
    return w


def _same_grid(coupled: Trajectory, baseline: Trajectory) -> None:
    if coupled.states.shape != baseline.states.shape or not np.allclose(
        coupled.times, baseline.times, rtol=1e-12, atol=0.0
    ):
        raise GridMismatchError("coupled and baseline trajectories must share the same grid and dimension")


def baseline_trajectory(delta: DecayVector, u: InputSignal, alpha0, t_grid) -> Trajectory:
    """
    Decoupled trajectory (Lambda = 0, same delta and u).

    The system is diagonal, so each component follows its scalar closed form.
    """
    grid = check_grid(t_grid)
    n = len(delta)
    alpha0 = np.asarray(alpha0, dtype=float)
    if alpha0.shape != (n,) or u.n != n:
        raise DimensionMismatchError(f"alpha0 and u must have dimension {n}")
    check_nonnegative("alpha0", alpha0)
    states = scalar_flow(-delta.rates, alpha0, u, grid)
    return Trajectory(times=grid, states=states, mode="linear")


def amplification(coupled: Trajectory, baseline: Trajectory, floor: float = AN__BASELINE_FLOOR) -> AmplificationReport:
    """
    Per-product ratio alpha_i(t) / alpha_i_baseline(t).

    Entries whose baseline does not exceed the floor are absent (NaN). Defined
    ratios below 1 - 1e-9 are counted as positivity violations.

    Args:
        coupled (Trajectory): Trajectory of the interacting system.
        baseline (Trajectory): Decoupled trajectory on the same grid.
        floor (float): Smallest baseline entry for which the ratio is defined.

    Returns:
        AmplificationReport: Ratios, both trajectories and the violation count.
    """
    _same_grid(coupled, baseline)
    defined = baseline.states > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(defined, coupled.states / np.where(defined, baseline.states, 1.0), np.nan)
    violations = int(np.sum(ratio[defined] < 1.0 - AN__AMPLIFICATION_TOL))
    if violations:
        logger.warning(f"{violations} amplification ratios fell below 1")
    return AmplificationReport(
        times=coupled.times, per_product=ratio, baseline=baseline, coupled=coupled, violations=violations
    )


def cumulative_influence(trajectory: Trajectory, w=None) -> float:
    """J = int w . alpha dt by the trapezoid rule on the trajectory grid."""
    w = _weights(w, trajectory.n)
    return float(trapezoid(trajectory.states @ w, trajectory.times))


def cumulative_amplification(w, coupled: Trajectory, baseline: Trajectory) -> float:
    """
    Ratio of weighted time integrals of the coupled and decoupled trajectories.

    Raises:
        ZeroBaselineError: The weighted baseline integral vanishes.
    """
    _same_grid(coupled, baseline)
    denominator = cumulative_influence(baseline, w)
    if denominator <= 0.0:
        raise ZeroBaselineError("Weighted baseline influence integrates to zero")
    return cumulative_influence(coupled, w) / denominator


def downstream_value(
    path: GeneratorPath, w, s: float, T: float, quad_points: Optional[int] = None
) -> np.ndarray:
    """
    q(s) = int_s^T Phi(t, s)^T w dt.

    Piecewise-constant paths are integrated exactly piece by piece; other
    paths use composite Gauss quadrature in t with transition matrices
    chained from node to node.

    Args:
        path (GeneratorPath): Generator path on a domain containing [s, T].
        w: Nonnegative weights.
        s (float): Lower time.
        T (float): Horizon end.
        quad_points (Optional[int]): Quadrature panels for smooth paths.

    Returns:
        np.ndarray: q(s), entrywise nonnegative.
    """
    n = path.n
    w = _weights(w, n)
    if s > T:
        raise ValueError(f"downstream value needs s <= T, got s={s}, T={T}")
    q = np.zeros(n)
    if s == T:
        return q

    if path.piecewise_constant:
        phi = np.eye(n)
        edges = split_interval(s, T, path.breakpoints)
        for lo, hi in zip(edges[:-1], edges[1:]):
            E, B = expm_integral(path.matrix(0.5 * (lo + hi)), hi - lo)
            q += (B @ phi).T @ w
            phi = E @ phi
        return q

    nodes, weights = gauss_legendre_panels(s, T, quad_points or 2 * SOL__INPUT_PANELS, path.breakpoints)
    phi = np.eye(n)
    previous = s
    for t, weight in zip(nodes, weights):
        phi = transition_matrix(path, previous, t).matrix @ phi
        q += weight * (phi.T @ w)
        previous = t
    return q


def sensitivity_delta_J(
    schedule: Schedule,
    alpha0,
    w,
    d_lambda,
    d_delta,
    sample_dt: float,
) -> SensitivityReport:
    """
    First-order change of J = int w . alpha dt under a perturbation of Lambda and delta.

    dJ = sum_{i != j} dLambda_ij int q_i alpha_j ds - sum_i ddelta_i int q_i alpha_i ds,
    with alpha from the exact schedule solution and q marched backwards
    exactly: q(s_k) = E_k^T q(s_{k+1}) + B_k^T w on every grid step. Both
    integrals use the trapezoid rule on the shared grid, with a Richardson
    estimate that flags grids too coarse for a 1e-3 relative accuracy.

    Args:
        schedule (Schedule): Base system.
        alpha0: Initial state.
        w: Nonnegative objective weights.
        d_lambda: Perturbation of Lambda (zero diagonal).
        d_delta: Perturbation of delta (signed).
        sample_dt (float): Grid spacing; segment boundaries are added.

    Returns:
        SensitivityReport: Edge and node integrals and delta_J.
    """
    start_time = datetime.now()
    n = schedule.n
    w = _weights(w, n)
    d_lambda = np.asarray(d_lambda, dtype=float)
    d_delta = np.asarray(d_delta, dtype=float)
    if d_lambda.shape != (n, n) or d_delta.shape != (n,):
        raise DimensionMismatchError(f"perturbations must be {n}x{n} and length {n}")
    if np.any(np.diag(d_lambda) != 0.0):
        raise ValueError("Lambda perturbation must have a zero diagonal")

    trajectory = solve_schedule(schedule, alpha0, sample_dt)
    times, alpha = trajectory.times, trajectory.states
    merged = schedule.coalesced()

    q = np.zeros_like(alpha)
    steps = {}
    for k in range(times.size - 2, -1, -1):
        index = merged.segment_index(0.5 * (times[k] + times[k + 1]))
        h = times[k + 1] - times[k]
        key = (index, float(np.round(h, 14)))
        if key not in steps:
            steps[key] = expm_integral(merged.segments[index].generator.matrix, h)
        E, B = steps[key]
        q[k] = E.T @ q[k + 1] + B.T @ w
    q = np.maximum(q, 0.0)

    integrand = q[:, :, None] * alpha[:, None, :]
    values, errors = trapezoid_with_estimate(integrand, times)
    node_values = np.diag(values).copy()
    edge_values = values.copy()
    np.fill_diagonal(edge_values, 0.0)

    delta_J = float(np.sum(d_lambda * edge_values) - d_delta @ node_values)
    relative_error = float(np.max(errors) / max(float(np.max(np.abs(values))), np.finfo(float).tiny))
    coarse = relative_error > AN__QUADRATURE_TOL
    if coarse:
        logger.warning(f"Sensitivity quadrature relative error {relative_error:.3g} exceeds {AN__QUADRATURE_TOL:g}")

    logger.debug(
        f"Computed sensitivity on {times.size} grid points "
        f"in {(datetime.now() - start_time).total_seconds():.3f} seconds"
    )
    return SensitivityReport(
        edge_values=edge_values,
        node_values=node_values,
        delta_J=delta_J,
        quadrature_error=relative_error,
        coarse_grid=coarse,
    )


def edge_roi(report: SensitivityReport, costs) -> List[EdgeROI]:
    """
    Off-diagonal edges ranked by edge value per unit cost.

    Ties are broken by (source, target) in lexicographic order.
    """
    values = report.edge_values
    n = values.shape[0]
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (n, n):
        raise DimensionMismatchError(f"costs must be {n}x{n}, got shape {costs.shape}")
    off = ~np.eye(n, dtype=bool)
    if np.any(costs[off] <= 0.0):
        raise ValueError("edge costs must be strictly positive")

    ranking = [
        EdgeROI(
            source=i,
            target=j,
            value=float(values[i, j]),
            cost=float(costs[i, j]),
            roi=float(values[i, j] / costs[i, j]),
        )
        for i in range(n)
        for j in range(n)
        if i != j
    ]
    return sorted(ranking, key=lambda e: (-e.roi, e.source, e.target))


def amplification_gradient(report: SensitivityReport, baseline_integral: float) -> np.ndarray:
    """d A_cum / d Lambda_ij: edge values over the weighted baseline integral."""
    if baseline_integral <= 0.0:
        raise ZeroBaselineError("Weighted baseline influence integrates to zero")
    return report.edge_values / baseline_integral


def policy_derivative(report: SensitivityReport, dlambda_deta, ddelta_deta) -> PolicyDerivative:
    """
    dJ/d(eta) for a one-parameter policy moving Lambda and delta together.

    The interaction term is sum dLambda_ij/deta int q_i alpha_j and the decay
    term is -sum ddelta_i/deta int q_i alpha_i. For a cost cut (delta falling,
    Lambda not rising) the terms have opposite signs and the verdict follows
    whichever dominates.
    """
    dlambda_deta = np.asarray(dlambda_deta, dtype=float)
    ddelta_deta = np.asarray(ddelta_deta, dtype=float)
    interaction = float(np.sum(dlambda_deta * report.edge_values))
    decay = float(-ddelta_deta @ report.node_values)
    total = interaction + decay
    if abs(total) <= 1e-12 * (abs(interaction) + abs(decay)):
        verdict = "neutral"
    else:
        verdict = "increase" if total > 0.0 else "decrease"
    return PolicyDerivative(interaction_term=interaction, decay_term=decay, dJ_deta=total, verdict=verdict)


def perceived_utility(N: int, params: PerceptionParams) -> float:
    """kappa log(1 + N beta)."""
    if N < 0:
        raise ValueError(f"number of add-ons must be >= 0, got {N}")
    return params.kappa * math.log1p(N * params.beta_addon)


def marginal_utility(N: float, params: PerceptionParams) -> float:
    if N < 0:
        raise ValueError(f"number of add-ons must be >= 0, got {N}")
    return params.kappa * params.beta_addon / (1.0 + N * params.beta_addon)


def saturation_point(beta_addon: float) -> float:
    """
    N* = 1/beta - 1, where the marginal perceived gain halves.

    Raises:
        SaturationError: beta > 1, so the gain halves before the first add-on.
    """
    if beta_addon <= 0.0:
        raise ValueError(f"add-on strength must be positive, got {beta_addon}")
    if beta_addon > 1.0:
        raise SaturationError(f"add-on strength {beta_addon:g} > 1 saturates before the first add-on")
    return 1.0 / beta_addon - 1.0


def frequency_amplification(beta_addon: float, n_g: int, s_steps: int) -> float:
    """1 + beta N_g S(S+1)/2."""
    if beta_addon < 0.0 or n_g < 1 or s_steps < 1:
        raise ValueError("frequency amplification needs beta >= 0, n_g >= 1 and s_steps >= 1")
    return 1.0 + beta_addon * n_g * s_steps * (s_steps + 1) / 2.0


def frequency_table(beta_addon: float, n_g: int, steps: Sequence[int]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "steps": list(steps),
            "amplification": [frequency_amplification(beta_addon, n_g, s) for s in steps],
        }
    )


def frequency_amplification_discrete(
    m: Generator,
    u,
    alpha0,
    beta_addon: float,
    n_g: int,
    s_steps: int,
    w=None,
    dt: float = 1.0,
) -> float:
    """
    Discrete add-on recursion with and without add-ons.

    Add-ons accumulate: at step k (k = 1..S) k N_g add-ons are live, each
    pushing every product by beta. Both recursions use the exact one-step
    maps A = e^{M dt} and B = int_0^dt e^{M tau} dtau.

    Args:
        m (Generator): Generator.
        u: Base input per step.
        alpha0: Initial state.
        beta_addon (float): Per-add-on push.
        n_g (int): Add-ons introduced per step.
        s_steps (int): Number of steps S.
        w: Weights, uniform by default.
        dt (float): Step length.

    Returns:
        float: w . alpha_S / w . alpha_S_baseline.

    Raises:
        ZeroBaselineError: The baseline weighted state vanishes at step S.
    """
    n = m.n
    w = _weights(w, n)
    u = np.asarray(u, dtype=float)
    alpha0 = np.asarray(alpha0, dtype=float)
    if u.shape != (n,) or alpha0.shape != (n,):
        raise DimensionMismatchError(f"u and alpha0 must have length {n}")
    check_nonnegative("alpha0", alpha0)
    check_nonnegative("u", u)
    if beta_addon < 0.0 or n_g < 1 or s_steps < 1:
        raise ValueError("discrete frequency amplification needs beta >= 0, n_g >= 1 and s_steps >= 1")

    A, B = expm_integral(m.matrix, dt)
    with_addons = alpha0.copy()
    baseline = alpha0.copy()
    for k in range(1, s_steps + 1):
        with_addons = A @ with_addons + B @ (u + beta_addon * k * n_g)
        baseline = A @ baseline + B @ u

    denominator = float(w @ baseline)
    if denominator <= 0.0:
        raise ZeroBaselineError("Weighted baseline state vanishes at the final step")
    return float(w @ with_addons) / denominator


def fit_addon_strength(n1: int, a1: float, n2: int, a2: float) -> float:
    """
    Heuristic per-add-on gain from two simulated amplification values.

    Fits A(N) ~ 1 + N beta as the slope through (n1, a1) and (n2, a2).
    """
    if n1 == n2:
        raise ValueError("fitting the add-on strength needs two distinct add-on counts")
    beta = (a2 - a1) / (n2 - n1)
    if beta <= 0.0:
        raise ValueError(f"amplification does not grow with add-ons (slope {beta:.3g})")
    return beta
