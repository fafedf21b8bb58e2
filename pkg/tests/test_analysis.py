import math

import numpy as np
import pytest

from ecosystem.analysis import (
    amplification,
    amplification_gradient,
    baseline_trajectory,
    cumulative_amplification,
    cumulative_influence,
    downstream_value,
    edge_roi,
    fit_addon_strength,
    frequency_amplification,
    frequency_amplification_discrete,
    frequency_table,
    marginal_utility,
    perceived_utility,
    policy_derivative,
    saturation_point,
    sensitivity_delta_J,
)
from ecosystem.core_model import assemble_generator
from ecosystem.exceptions import GridMismatchError, SaturationError, ZeroBaselineError
from ecosystem.matfun import expm_integral
from ecosystem.models.network import DecayVector, InteractionMatrix
from ecosystem.models.results import PerceptionParams, SensitivityReport
from ecosystem.models.signals import GeneratorPath, InputSignal, Schedule
from ecosystem.solvers import solve_schedule

HORIZON = 5.0
SAMPLE_DT = 0.01


def run(lam: np.ndarray, rates, u, alpha0, sample_dt=SAMPLE_DT):
    m = assemble_generator(InteractionMatrix(entries=lam), DecayVector(rates=rates))
    schedule = Schedule.constant(m, u, 0.0, HORIZON)
    return schedule, solve_schedule(schedule, alpha0, sample_dt)


@pytest.fixture
def coupled_pair(pair):
    lam, delta, m = pair
    u = np.array([1.0, 0.2])
    alpha0 = np.array([0.1, 0.0])
    schedule = Schedule.constant(m, u, 0.0, HORIZON)
    coupled = solve_schedule(schedule, alpha0, 0.1)
    baseline = baseline_trajectory(delta, InputSignal.constant(u), alpha0, coupled.times)
    return schedule, coupled, baseline


def test_baseline_is_componentwise_closed_form(pair):
    _, delta, _ = pair
    t = np.linspace(0.0, 3.0, 7)
    traj = baseline_trajectory(delta, InputSignal.constant([1.0, 0.0]), [0.0, 2.0], t)
    assert np.allclose(traj.states[:, 0], (1.0 - np.exp(-t)) / 1.0, rtol=1e-13)
    assert np.allclose(traj.states[:, 1], 2.0 * np.exp(-0.8 * t), rtol=1e-13)


def test_amplification_is_at_least_one(coupled_pair):
    _, coupled, baseline = coupled_pair
    report = amplification(coupled, baseline)
    assert report.violations == 0
    assert report.min_defined >= 1.0 - 1e-9
    assert report.max_defined > 1.0


def test_amplification_is_absent_where_baseline_vanishes(pair):
    lam, delta, m = pair
    u = InputSignal.constant([1.0, 0.0])
    coupled = solve_schedule(Schedule.constant(m, [1.0, 0.0], 0.0, 2.0), [0.5, 0.0], 0.5)
    baseline = baseline_trajectory(delta, u, [0.5, 0.0], coupled.times)
    report = amplification(coupled, baseline)
    assert np.all(np.isnan(report.per_product[:, 1]))
    assert not np.any(np.isnan(report.per_product[:, 0]))
    assert report.model_dump()["per_product"][0][1] is None


def test_cumulative_amplification(coupled_pair):
    _, coupled, baseline = coupled_pair
    value = cumulative_amplification([0.5, 0.5], coupled, baseline)
    assert value > 1.0
    assert value == pytest.approx(cumulative_influence(coupled) / cumulative_influence(baseline))


def test_cumulative_amplification_needs_positive_baseline(pair):
    _, delta, m = pair
    coupled = solve_schedule(Schedule.constant(m, [0.0, 0.0], 0.0, 1.0), [0.0, 0.0], 0.5)
    baseline = baseline_trajectory(delta, InputSignal.zeros(2), [0.0, 0.0], coupled.times)
    with pytest.raises(ZeroBaselineError):
        cumulative_amplification(None, coupled, baseline)


def test_grids_must_match(coupled_pair, pair):
    _, delta, _ = pair
    _, coupled, _ = coupled_pair
    other = baseline_trajectory(delta, InputSignal.zeros(2), [0.1, 0.0], [0.0, 1.0])
    with pytest.raises(GridMismatchError):
        amplification(coupled, other)


def test_downstream_value_of_constant_path(pair):
    _, _, m = pair
    w = np.array([0.25, 0.75])
    q = downstream_value(GeneratorPath.constant(m, 0.0, 4.0), w, 1.0, 4.0)
    _, B = expm_integral(m.matrix, 3.0)
    assert np.allclose(q, B.T @ w, rtol=1e-12)
    assert np.array_equal(downstream_value(GeneratorPath.constant(m, 0.0, 4.0), w, 4.0, 4.0), [0.0, 0.0])


def test_downstream_value_of_commuting_path(pair):
    _, _, m = pair
    w = np.array([1.0, 0.0])
    path = GeneratorPath.scaled(lambda t: 2.0, m, 0.0, 3.0)
    q = downstream_value(path, w, 0.0, 3.0)
    _, B = expm_integral(2.0 * m.matrix, 3.0)
    assert np.allclose(q, B.T @ w, rtol=1e-7)


@pytest.mark.parametrize(
    "d_lambda, d_delta",
    [
        ([[0.0, 1.0, 0.0], [0.0, 0.0, 0.5], [0.0, 0.0, 0.0]], [0.0, 0.0, 0.0]),
        ([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [0.3, 0.2, 0.1]),
    ],
)
def test_sensitivity_matches_finite_difference(d_lambda, d_delta):
    lam = np.array([[0.0, 0.4, 0.1], [0.2, 0.0, 0.3], [0.0, 0.5, 0.0]])
    rates = np.array([1.0, 1.3, 0.9])
    u = np.array([0.5, 0.0, 0.2])
    alpha0 = np.array([0.1, 0.3, 0.0])
    w = np.array([0.2, 0.5, 0.3])
    d_lambda, d_delta = np.asarray(d_lambda), np.asarray(d_delta)

    schedule, _ = run(lam, rates, u, alpha0)
    report = sensitivity_delta_J(schedule, alpha0, w, d_lambda, d_delta, SAMPLE_DT)

    eps = 1e-5
    _, plus = run(lam + eps * d_lambda, rates + eps * d_delta, u, alpha0)
    _, minus = run(lam - eps * d_lambda, rates - eps * d_delta, u, alpha0)
    finite = (cumulative_influence(plus, w) - cumulative_influence(minus, w)) / (2.0 * eps)

    assert report.delta_J == pytest.approx(finite, rel=1e-3)
    assert not report.coarse_grid
    assert np.all(np.diag(report.edge_values) == 0.0)
    assert np.all(report.node_values >= 0.0)


def test_sensitivity_rejects_self_interaction(coupled_pair):
    schedule, _, _ = coupled_pair
    with pytest.raises(ValueError):
        sensitivity_delta_J(schedule, [0.1, 0.0], None, [[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 0.1)


def report_with(edges) -> SensitivityReport:
    edges = np.asarray(edges, dtype=float)
    return SensitivityReport(edge_values=edges, node_values=np.array([2.0, 1.0, 0.5]), delta_J=0.0)


def test_edge_roi_ranking():
    report = report_with([[0.0, 2.0, 1.0], [3.0, 0.0, 1.0], [0.5, 1.0, 0.0]])
    costs = np.array([[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [1.0, 0.5, 1.0]])
    ranking = edge_roi(report, costs)
    assert [(e.source, e.target) for e in ranking][:3] == [(0, 1), (2, 1), (0, 2)]
    assert [e.roi for e in ranking] == sorted((e.roi for e in ranking), reverse=True)
    assert len(ranking) == 6


def test_edge_roi_rejects_free_edges():
    with pytest.raises(ValueError):
        edge_roi(report_with(np.zeros((3, 3))), np.zeros((3, 3)))


def test_amplification_gradient():
    report = report_with([[0.0, 2.0, 1.0], [3.0, 0.0, 1.0], [0.5, 1.0, 0.0]])
    assert np.allclose(amplification_gradient(report, 4.0), report.edge_values / 4.0)
    with pytest.raises(ZeroBaselineError):
        amplification_gradient(report, 0.0)


def test_policy_derivative_verdicts():
    report = report_with([[0.0, 2.0, 1.0], [3.0, 0.0, 1.0], [0.5, 1.0, 0.0]])
    cost_cut = policy_derivative(report, np.zeros((3, 3)), [-1.0, -1.0, -1.0])
    assert cost_cut.decay_term == pytest.approx(3.5)
    assert cost_cut.verdict == "increase"

    fewer_links = policy_derivative(report, -np.ones((3, 3)) + np.eye(3), [-0.1, 0.0, 0.0])
    assert fewer_links.interaction_term == pytest.approx(-8.5)
    assert fewer_links.verdict == "decrease"

    assert policy_derivative(report, np.zeros((3, 3)), np.zeros(3)).verdict == "neutral"


def test_perceived_utility_and_saturation():
    params = PerceptionParams(kappa=2.0, beta_addon=0.25)
    assert perceived_utility(0, params) == 0.0
    assert perceived_utility(4, params) == pytest.approx(2.0 * math.log(2.0))
    n_star = saturation_point(0.25)
    assert n_star == pytest.approx(3.0)
    assert marginal_utility(n_star + 1.0, params) == pytest.approx(marginal_utility(0, params) / 2.0)


def test_saturation_before_first_addon():
    with pytest.raises(SaturationError):
        saturation_point(2.0)
    assert saturation_point(1.0) == 0.0


def test_frequency_amplification_closed_form():
    assert frequency_amplification(0.1, 2, 3) == pytest.approx(2.2)
    table = frequency_table(0.1, 2, [1, 2, 3])
    assert list(table.columns) == ["steps", "amplification"]
    assert table["amplification"].tolist() == pytest.approx([1.2, 1.6, 2.2])


def test_discrete_frequency_amplification(pair):
    _, _, m = pair
    u = np.array([0.5, 0.5])
    alpha0 = np.array([0.2, 0.2])
    assert frequency_amplification_discrete(m, u, alpha0, 0.0, 3, 10) == pytest.approx(1.0)

    values = [frequency_amplification_discrete(m, u, alpha0, 0.05, 3, s) for s in range(10, 21)]
    assert all(b > a > 1.0 for a, b in zip(values[:-1], values[1:]))
    slope = fit_addon_strength(10, values[0], 20, values[-1])
    assert slope > 0.0


def test_fit_addon_strength():
    assert fit_addon_strength(10, 2.0, 20, 3.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        fit_addon_strength(5, 2.0, 5, 3.0)
    with pytest.raises(ValueError):
        fit_addon_strength(5, 3.0, 10, 2.0)


def test_amplification_on_random_systems(rng, make_system):
    grid_dt = 0.25
    for _ in range(200):
        n = int(rng.integers(2, 6))
        lam, delta, m = make_system(n=n)
        u = rng.uniform(0.1, 1.0, n)
        alpha0 = rng.uniform(0.1, 1.0, n)
        coupled = solve_schedule(Schedule.constant(m, u, 0.0, 3.0), alpha0, grid_dt)
        baseline = baseline_trajectory(delta, InputSignal.constant(u), alpha0, coupled.times)
        report = amplification(coupled, baseline)
        assert report.violations == 0
        assert report.min_defined >= 1.0 - 1e-9
        if lam.entries.any():
            assert report.max_defined > 1.0 + 1e-6


def test_saturation_point_of_half_strength_is_one():
    assert saturation_point(0.5) == 1.0
    assert saturation_point(0.25) == 3.0


def test_frequency_amplification_is_quadratic_near_identity(rng):
    beta, n_g = 0.05, 3
    lam = rng.uniform(0.0, 0.001, size=(4, 4))
    np.fill_diagonal(lam, 0.0)
    rates = lam.sum(axis=1) + rng.uniform(0.0, 0.002, 4)
    m = assemble_generator(InteractionMatrix(entries=lam), DecayVector(rates=rates))
    assert np.linalg.norm(m.matrix, 1) <= 0.01

    steps = np.arange(1, 21)
    discrete = np.array(
        [frequency_amplification_discrete(m, np.zeros(4), np.ones(4), beta, n_g, int(s)) for s in steps]
    )
    closed = np.array([frequency_amplification(beta, n_g, int(s)) for s in steps])
    assert np.all(np.abs(discrete - closed) <= 0.05 * closed)

    slope, _ = np.polyfit(np.log(steps[9:]), np.log(discrete[9:] - 1.0), 1)
    assert slope == pytest.approx(2.0, abs=0.1)


def random_perturbation(rng, lam):
    n = lam.shape[0]
    d_lambda = rng.uniform(-1.0, 1.0, size=(n, n))
    d_lambda[lam == 0.0] = 0.0
    return d_lambda, rng.uniform(-0.5, 0.5, n)


def test_sensitivity_matches_finite_difference_on_random_systems(rng, make_system):
    eps = 1e-4
    for _ in range(50):
        n = int(rng.integers(2, 5))
        lam, delta, _ = make_system(n=n)
        u = rng.uniform(0.0, 1.0, n)
        alpha0 = rng.uniform(0.0, 1.0, n)
        w = rng.uniform(0.1, 1.0, n)
        d_lambda, d_delta = random_perturbation(rng, lam.entries)

        schedule, _ = run(lam.entries, delta.rates, u, alpha0)
        report = sensitivity_delta_J(schedule, alpha0, w, d_lambda, d_delta, SAMPLE_DT)
        _, plus = run(lam.entries + eps * d_lambda, delta.rates + eps * d_delta, u, alpha0)
        _, minus = run(lam.entries - eps * d_lambda, delta.rates - eps * d_delta, u, alpha0)
        finite = (cumulative_influence(plus, w) - cumulative_influence(minus, w)) / (2.0 * eps)

        magnitude = np.abs(d_lambda * report.edge_values).sum() + np.abs(d_delta * report.node_values).sum()
        assert report.delta_J == pytest.approx(finite, rel=1e-3, abs=1e-3 * magnitude)


def test_strengthening_links_never_lowers_influence(rng, make_system):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        lam, delta, _ = make_system(n=n)
        u = rng.uniform(0.0, 1.0, n)
        alpha0 = rng.uniform(0.0, 1.0, n)
        d_lambda = rng.uniform(0.0, 1.0, size=(n, n))
        np.fill_diagonal(d_lambda, 0.0)

        schedule, _ = run(lam.entries, delta.rates, u, alpha0, sample_dt=0.05)
        report = sensitivity_delta_J(schedule, alpha0, None, d_lambda, np.zeros(n), 0.05)
        assert report.delta_J >= 0.0


def test_cost_cut_can_go_either_way(pair):
    lam, delta, _ = pair
    schedule, _ = run(lam.entries, delta.rates, [1.0, 0.2], [0.1, 0.0])
    report = sensitivity_delta_J(schedule, [0.1, 0.0], None, np.zeros((2, 2)), np.zeros(2), SAMPLE_DT)
    links = np.ones((2, 2)) - np.eye(2)
    decay_gain = report.node_values.sum()
    link_value = (links * report.edge_values).sum()

    mild = policy_derivative(report, -0.5 * decay_gain / link_value * links, [-1.0, -1.0])
    assert mild.dJ_deta > 0.0
    assert mild.verdict == "increase"

    harsh = policy_derivative(report, -2.0 * decay_gain / link_value * links, [-1.0, -1.0])
    assert harsh.dJ_deta < 0.0
    assert harsh.verdict == "decrease"
