import argparse
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ecosystem.analysis import (
    amplification,
    amplification_gradient,
    baseline_trajectory,
    cumulative_amplification,
    cumulative_influence,
    edge_roi,
    frequency_amplification_discrete,
    frequency_table,
    perceived_utility,
    policy_derivative,
    saturation_point,
    sensitivity_delta_J,
)
from ecosystem.artifacts import ReportArtifact, SupportArtifact, SweepArtifact, TrajectoryArtifact
from ecosystem.core_model import equilibrium, is_hurwitz
from ecosystem.estimation import fit_discrete, fit_sparse, fit_windows, identify
from ecosystem.exceptions import ModelError, NumericalError, SaturationError
from ecosystem.matfun import spectral_radius
from ecosystem.models.config import AnalysisConfig, ScenarioConfig, load_scenario
from ecosystem.models.signals import Schedule
from ecosystem.nonlinear import integrate_saturating, refine_threshold, sweep_tau
from ecosystem.solvers import sample_times, solve_schedule, solve_time_varying
from ecosystem.tables.snapshots import SnapshotTable
from ecosystem.utils import _setup_logger

logger = _setup_logger()

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4


def cmd_simulate(config: ScenarioConfig, out: Optional[str], fmt: str, seed: int) -> int:
    """
    Solve the configured model and write the trajectory table plus a summary.

    Args:
        config (ScenarioConfig): Validated scenario
        out (Optional[str]): Output directory
        fmt (str): Trajectory table format, "csv" or "json"
        seed (int): Recorded in the summary
    """
    if config.model is None:
        raise ModelError("simulate needs a model block")
    model, run = config.model, config.run
    alpha0 = np.asarray(model.alpha0, dtype=float)
    generator = model.build_generator()
    inputs = None

    logger.info(f"Simulating {model.n} products in {run.mode} mode over [{model.t0}, {model.t_end}]")
    if run.mode == "saturating":
        trajectory = integrate_saturating(
            model.build_interactions(),
            model.build_decay(),
            model.build_crowding(),
            alpha0,
            model.horizon,
            run.step,
            t0=model.t0,
        )
    elif run.mode == "time-varying":
        signal = model.build_input()
        grid = sample_times(model.t0, model.t_end, run.sample_dt)
        trajectory = solve_time_varying(
            model.build_path(),
            signal,
            alpha0,
            grid,
            method=run.method,
            tol=run.pb_tol,
            substeps=run.substeps,
            max_terms=run.max_terms,
        )
        inputs = np.stack([signal.at(t) for t in trajectory.times])
    else:
        if run.mode == "constant":
            signal = model.build_input()
            if any(model.t0 < t < model.t_end for t in signal.breakpoints) or model.segments:
                raise ModelError("constant mode needs a constant input and no segments; use schedule mode")
            schedule = Schedule.constant(generator, signal.at(model.t0), model.t0, model.horizon)
        else:
            schedule = model.build_schedule()
        trajectory = solve_schedule(schedule, alpha0, run.sample_dt)
        merged = schedule.coalesced()
        inputs = np.stack([merged.segments[merged.segment_index(t)].input for t in trajectory.times])

    check = is_hurwitz(generator)
    summary: Dict[str, Any] = {
        "command": "simulate",
        "mode": run.mode,
        "seed": seed,
        "n": model.n,
        "samples": int(trajectory.times.size),
        "final_time": float(trajectory.times[-1]),
        "final_state": trajectory.states[-1],
        "min_entry": float(np.min(trajectory.states)),
        "max_entry": float(np.max(trajectory.states)),
        "positive": bool(np.min(trajectory.states) >= -1e-12),
        "hurwitz": check.hurwitz,
        "spectral_abscissa": check.abscissa,
        "equilibrium": None,
        "clamp_events": trajectory.clamp_events,
    }
    if run.mode == "constant" and check.hurwitz:
        summary["equilibrium"] = equilibrium(generator, schedule.segments[0].input)

    TrajectoryArtifact(out).sync(trajectory, inputs, fmt)
    ReportArtifact(out).sync("summary", summary)
    return EXIT_OK


def _perception_block(analysis: AnalysisConfig) -> Optional[Dict[str, Any]]:
    if analysis.perception is None:
        return None
    params = analysis.perception.build()
    block: Dict[str, Any] = {
        "kappa": params.kappa,
        "beta_addon": params.beta_addon,
        "utility": [perceived_utility(N, params) for N in range(11)],
    }
    try:
        block["saturation_point"] = saturation_point(params.beta_addon)
    except SaturationError as e:
        logger.warning(str(e))
        block["saturation_point"] = None
        block["saturation_note"] = "saturation before the first add-on"
    return block


def cmd_analyze(config: ScenarioConfig, out: Optional[str], fmt: str, seed: int) -> int:
    """
    Amplification, cumulative amplification, sensitivity and ROI report.

    Args:
        config (ScenarioConfig): Validated scenario with a model block
        out (Optional[str]): Output directory
        fmt (str): Unused; the report is always JSON
        seed (int): Recorded in the report
    """
    if config.model is None:
        raise ModelError("analyze needs a model block")
    model, run = config.model, config.run
    analysis = config.analysis or AnalysisConfig()
    n = model.n
    alpha0 = np.asarray(model.alpha0, dtype=float)
    w = np.asarray(analysis.weights, dtype=float) if analysis.weights is not None else np.full(n, 1.0 / n)

    schedule = model.build_schedule()
    coupled = solve_schedule(schedule, alpha0, run.sample_dt)
    baseline = baseline_trajectory(model.build_decay(), schedule.coalesced().input_signal(), alpha0, coupled.times)
    report = amplification(coupled, baseline, analysis.floor)
    baseline_integral = cumulative_influence(baseline, w)

    d_lambda = np.asarray(analysis.d_lambda, dtype=float) if analysis.d_lambda is not None else np.zeros((n, n))
    d_delta = np.asarray(analysis.d_delta, dtype=float) if analysis.d_delta is not None else np.zeros(n)
    sensitivity = sensitivity_delta_J(schedule, alpha0, w, d_lambda, d_delta, run.sample_dt)
    costs = np.asarray(analysis.edge_costs, dtype=float) if analysis.edge_costs is not None else np.ones((n, n))

    payload: Dict[str, Any] = {
        "command": "analyze",
        "seed": seed,
        "weights": w,
        "amplification": {
            "times": report.times,
            "per_product": report.per_product,
            "min": report.min_defined,
            "max": report.max_defined,
            "violations": report.violations,
        },
        "cumulative_influence": cumulative_influence(coupled, w),
        "cumulative_amplification": cumulative_amplification(w, coupled, baseline),
        "sensitivity": {
            "edge_values": sensitivity.edge_values,
            "node_values": sensitivity.node_values,
            "delta_J": sensitivity.delta_J,
            "quadrature_error": sensitivity.quadrature_error,
            "coarse_grid": sensitivity.coarse_grid,
            "amplification_gradient": amplification_gradient(sensitivity, baseline_integral),
        },
        "roi": [edge.model_dump() for edge in edge_roi(sensitivity, costs)],
        "perception": _perception_block(analysis),
        "frequency": None,
        "policy": None,
    }

    if analysis.frequency is not None:
        freq = analysis.frequency
        push = schedule.segments[0].input
        table = frequency_table(freq.beta_addon, freq.n_g, freq.steps)
        table["discrete"] = [
            frequency_amplification_discrete(
                schedule.segments[0].generator, push, alpha0, freq.beta_addon, freq.n_g, s, w
            )
            for s in freq.steps
        ]
        payload["frequency"] = {
            "beta_addon": freq.beta_addon,
            "n_g": freq.n_g,
            "table": table.to_dict(orient="records"),
        }
    if analysis.policy is not None:
        payload["policy"] = policy_derivative(
            sensitivity, analysis.policy.dlambda_deta, analysis.policy.ddelta_deta
        ).model_dump()

    ReportArtifact(out).sync("analysis", payload)
    return EXIT_OK


def cmd_threshold(config: ScenarioConfig, out: Optional[str], fmt: str, seed: int) -> int:
    """
    Adoption-pressure sweep on the configured graph.

    Returns 4 when every sweep point is inconclusive.
    """
    if config.sweep is None:
        raise ModelError("threshold needs a sweep block")
    sweep_cfg = config.sweep
    adjacency = sweep_cfg.graph.build()
    result = sweep_tau(
        adjacency,
        sweep_cfg.tau_grid(),
        sweep_cfg.x0,
        sweep_cfg.horizon,
        extinction_tol=sweep_cfg.extinction_tol,
        step=sweep_cfg.step,
        delta=sweep_cfg.delta,
        workers=sweep_cfg.workers,
    )
    rho, _ = spectral_radius(adjacency)

    bracket = list(result.bracket) if result.bracket else None
    refined = None
    if bracket and sweep_cfg.refine_width and bracket[1] - bracket[0] > sweep_cfg.refine_width:
        refined = list(
            refine_threshold(
                adjacency,
                bracket[0],
                bracket[1],
                sweep_cfg.refine_width,
                sweep_cfg.x0,
                sweep_cfg.horizon,
                extinction_tol=sweep_cfg.extinction_tol,
                step=sweep_cfg.step,
                delta=sweep_cfg.delta,
            )
        )

    payload = {
        "command": "threshold",
        "seed": seed,
        "lambda_max": rho,
        "critical_tau": result.critical_tau,
        "bracket": bracket,
        "refined_bracket": refined,
        "contains_critical": bool(bracket and bracket[0] <= result.critical_tau <= bracket[1]),
        "transition": "observed" if bracket else "no transition observed",
        "monotone": result.monotone,
        "inconclusive": [p.tau for p in result.inconclusive],
    }
    SweepArtifact(out).sync(result, fmt)
    ReportArtifact(out).sync("bracket", payload)

    if len(result.inconclusive) == len(result.points):
        logger.warning("Every sweep point was inconclusive; extend the horizon")
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _fit_payload(fit) -> Dict[str, Any]:
    return {
        "A_hat": fit.A_hat,
        "B_hat": fit.B_hat,
        "M_hat": fit.M_hat,
        "residual_rms": fit.residual_rms,
        "metzler_violation": fit.metzler_violation,
        "l1_weight": fit.l1_weight,
        "iterations": fit.iterations,
    }


def cmd_estimate(config: ScenarioConfig, out: Optional[str], fmt: str, seed: int) -> int:
    """
    Identify the generator from a snapshot CSV.

    Args:
        config (ScenarioConfig): Validated scenario with an estimation block
        out (Optional[str]): Output directory
        fmt (str): Format of the support table when an l1 grid is given
        seed (int): Recorded in the report
    """
    if config.estimation is None:
        raise ModelError("estimate needs an estimation block")
    est = config.estimation
    table = SnapshotTable()
    table.load_data(est.input_csv)
    table.process_data()
    data = table.to_snapshots()

    diagnostics = fit_discrete(data, est.rank_tol)
    if est.l1_weight > 0.0:
        fit = fit_sparse(data, est.l1_weight, max_iter=est.max_iter, rank_tol=est.rank_tol)
    else:
        fit = identify(data, rank_tol=est.rank_tol)

    payload: Dict[str, Any] = {
        "command": "estimate",
        "seed": seed,
        "dt": data.dt,
        "snapshots": data.steps + 1,
        **_fit_payload(fit),
        "singular_values": diagnostics.singular_values,
        "b_identifiable": diagnostics.b_identifiable,
        "deficient_directions": diagnostics.deficient_directions,
        "windows": None,
    }
    if est.window is not None:
        payload["windows"] = [_fit_payload(f) for f in fit_windows(data, est.window, l1_weight=est.l1_weight)]

    if est.l1_grid:
        rows: List[Dict[str, Any]] = []
        for weight in est.l1_grid:
            sparse = fit_sparse(data, weight, max_iter=est.max_iter, rank_tol=est.rank_tol)
            rows.append(
                {
                    "l1_weight": weight,
                    "nonzero_offdiag": int(sparse.support.sum()),
                    "residual_rms": sparse.residual_rms,
                }
            )
        SupportArtifact(out).sync(pd.DataFrame(rows), fmt)

    ReportArtifact(out).sync("fit", payload)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "threshold": cmd_threshold,
    "estimate": cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Product-ecosystem influence toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=str, required=True, help="Path to the JSON scenario file")
        sub.add_argument(
            "--out",
            type=str,
            default=None,
            help="Output directory (defaults to ECOSYSTEM_OUTPUT_DIR, then ./output)",
        )
        sub.add_argument("--seed", type=int, default=0, help="Recorded in the outputs")
        sub.add_argument("--format", type=str, choices=["csv", "json"], default="csv", help="Table format")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    start_time = datetime.now()
    try:
        config = load_scenario(args.config)
        code = COMMANDS[args.command](config, args.out, args.format, args.seed)
    except NumericalError as e:
        logger.error(f"Numerical failure in {args.command}: {str(e)}")
        return EXIT_NUMERICAL
    except (ValidationError, ModelError, ValueError, OSError) as e:
        logger.error(f"Invalid input for {args.command}: {str(e)}")
        return EXIT_CONFIG

    logger.info(f"Finished {args.command} in {(datetime.now() - start_time).total_seconds():.2f} seconds")
    return code


if __name__ == "__main__":
    sys.exit(main())
