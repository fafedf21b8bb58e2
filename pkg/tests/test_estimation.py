import numpy as np
import pytest
import scipy.linalg as la

from ecosystem.exceptions import AliasingError, BranchCutError, IdentifiabilityError, SnapshotFormatError
from ecosystem.estimation import (
    add_measurement_noise,
    fit_discrete,
    fit_sparse,
    fit_windows,
    identify,
    project_metzler,
    recover_generator,
    simulate_discrete,
)
from ecosystem.models.network import Generator
from ecosystem.models.results import SnapshotSet
from ecosystem.solvers import solve_constant
from ecosystem.tables.snapshots import SnapshotTable

DT = 0.2


@pytest.fixture
def excited(rng, sparse_generator):
    inputs = rng.uniform(0.0, 1.0, size=(150, 3)) * (rng.uniform(size=(150, 3)) < 0.35)
    return simulate_discrete(sparse_generator, inputs, [0.2, 0.1, 0.4], DT, 150)


def test_simulate_discrete_matches_exact_solution(pair):
    _, _, m = pair
    data = simulate_discrete(m, [1.0, 0.5], [0.0, 0.2], 0.5, 4)
    assert data.states.shape == (5, 2)
    assert np.allclose(data.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert np.allclose(data.states[4], solve_constant(m, [0.0, 0.2], [1.0, 0.5], 2.0), rtol=1e-12)


def test_simulate_discrete_rejects_bad_input_rows(pair):
    _, _, m = pair
    with pytest.raises(ValueError):
        simulate_discrete(m, np.ones((2, 2)), [0.0, 0.0], 0.5, 4)


def test_fit_discrete_recovers_one_step_maps(excited, sparse_generator):
    fit = fit_discrete(excited)
    E = la.expm(DT * sparse_generator.matrix)
    B = la.solve(sparse_generator.matrix, E - np.eye(3))
    assert np.allclose(fit.A_hat, E, atol=1e-10)
    assert np.allclose(fit.B_hat, B, atol=1e-10)
    assert fit.b_identifiable
    assert fit.residual_rms < 1e-12


def test_identify_recovers_generator(excited, sparse_generator):
    fit = identify(excited)
    assert np.allclose(fit.M_hat, sparse_generator.matrix, atol=1e-8)
    assert fit.metzler_violation < 1e-8


def test_zero_input_leaves_b_unidentified(sparse_generator):
    data = simulate_discrete(sparse_generator, [0.0, 0.0, 0.0], [1.0, 0.3, 0.6], DT, 30)
    fit = fit_discrete(data)
    assert not fit.b_identifiable
    assert fit.deficient_directions.shape == (3, 6)
    assert np.allclose(fit.deficient_directions[:, :3], 0.0, atol=1e-8)
    assert np.allclose(recover_generator(fit.A_hat, DT), sparse_generator.matrix, atol=1e-6)


def test_constant_states_are_not_identifiable():
    data = SnapshotSet(dt=1.0, states=np.zeros((6, 2)), inputs=np.zeros((6, 2)))
    with pytest.raises(IdentifiabilityError) as info:
        fit_discrete(data)
    assert info.value.directions


def test_single_snapshot_is_rejected():
    data = SnapshotSet(dt=1.0, states=np.ones((1, 2)), inputs=np.zeros((1, 2)))
    with pytest.raises(IdentifiabilityError):
        fit_discrete(data)


def test_negative_states_are_rejected():
    with pytest.raises(ValueError):
        SnapshotSet(dt=1.0, states=[[1.0], [-0.5]], inputs=np.zeros((2, 1)))


def test_aliased_sampling_is_reported():
    with pytest.raises(AliasingError) as info:
        recover_generator(np.diag([-0.5, 0.5]), 1.0)
    assert isinstance(info.value, BranchCutError)


def test_project_metzler():
    projected, violation = project_metzler([[-1.0, -0.2], [0.3, -2.0]])
    assert np.array_equal(projected, [[-1.0, 0.0], [0.3, -2.0]])
    assert violation == pytest.approx(0.2)
    Generator(matrix=projected)


def test_sparse_fit_recovers_support(excited, sparse_generator):
    noisy = add_measurement_noise(excited, 1e-6, seed=4)
    fit = fit_sparse(noisy, l1_weight=1e-3)
    truth = sparse_generator.matrix != 0.0
    np.fill_diagonal(truth, False)
    assert np.array_equal(fit.support, truth)
    assert np.allclose(fit.M_hat, sparse_generator.matrix, atol=0.05)
    assert fit.iterations > 0
    assert fit.l1_weight == 1e-3


def test_unpenalized_sparse_fit_agrees_with_pipeline(excited):
    pipeline = identify(excited)
    direct = fit_sparse(excited, l1_weight=0.0)
    assert np.allclose(direct.M_hat, pipeline.M_hat, atol=1e-6)


def test_sparse_fit_rejects_negative_weight(excited):
    with pytest.raises(ValueError):
        fit_sparse(excited, l1_weight=-1.0)


def test_fit_windows_tracks_a_switch(rng, sparse_generator):
    other = Generator(matrix=[[-2.0, 0.1, 0.6], [0.2, -1.5, 0.0], [0.0, 0.7, -0.8]])
    inputs = rng.uniform(0.0, 1.0, size=(41, 3))
    first = simulate_discrete(sparse_generator, inputs[:21], [0.2, 0.1, 0.4], DT, 20)
    second = simulate_discrete(other, inputs[20:], first.states[-1], DT, 20)
    data = SnapshotSet(
        dt=DT,
        states=np.vstack([first.states, second.states[1:]]),
        inputs=np.vstack([first.inputs[:-1], second.inputs]),
    )
    fits = fit_windows(data, window=20)
    assert len(fits) == 2
    assert np.allclose(fits[0].M_hat, sparse_generator.matrix, atol=1e-7)
    assert np.allclose(fits[1].M_hat, other.matrix, atol=1e-7)


def test_measurement_noise_is_seeded_and_nonnegative(excited):
    a = add_measurement_noise(excited, 0.5, seed=1)
    b = add_measurement_noise(excited, 0.5, seed=1)
    assert np.array_equal(a.states, b.states)
    assert a.states.min() >= 0.0


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_snapshot_table_reads_uniform_csv(tmp_path):
    path = write_csv(tmp_path / "snap.csv", ["t,alpha_1,u_1", "0,1.0,0.5", "0.5,0.9,0.5", "1.0,0.85,0.0"])
    table = SnapshotTable()
    table.load_data(path)
    table.process_data()
    data = table.to_snapshots()
    assert data.dt == 0.5
    assert data.n == 1
    assert np.array_equal(data.inputs[:, 0], [0.5, 0.5, 0.0])


def test_snapshot_table_writes_what_it_reads(tmp_path, excited):
    path = str(tmp_path / "snap.csv")
    SnapshotTable.from_snapshots(excited).save_data(path)
    table = SnapshotTable()
    table.load_data(path)
    table.process_data()
    data = table.to_snapshots()
    assert np.array_equal(data.states, excited.states)
    assert data.dt == pytest.approx(DT, rel=1e-12)


@pytest.mark.parametrize(
    "lines, row",
    [
        (["t,alpha_1,u_2", "0,1,0"], None),
        (["t,alpha_1,u_1", "0,1,0", "1,abc,0"], 2),
        (["t,alpha_1,u_1", "0,1,0", "1,1,-0.5"], 2),
        (["t,alpha_1,u_1", "0,1,0", "1,1,0", "2.5,1,0"], 3),
        (["t,alpha_1,u_1", "0,1,0", "0,1,0"], 2),
    ],
)
def test_snapshot_table_validation(tmp_path, lines, row):
    table = SnapshotTable()
    table.load_data(write_csv(tmp_path / "bad.csv", lines))
    with pytest.raises(SnapshotFormatError) as info:
        table.process_data()
    assert info.value.row == row


def test_identify_round_trip_on_random_systems(rng, make_system):
    for _ in range(50):
        n = int(rng.integers(2, 6))
        _, _, m = make_system(n=n)
        dt = 0.2 / np.linalg.norm(m.matrix, 2)
        steps = 20 * n
        inputs = rng.uniform(0.0, 1.0, size=(steps, n)) * (rng.uniform(size=(steps, n)) < 0.35)
        data = simulate_discrete(m, inputs, rng.uniform(0.0, 1.0, n), dt, steps)
        fit = identify(data)
        assert np.linalg.norm(fit.M_hat - m.matrix) <= 1e-6 * np.linalg.norm(m.matrix)


def test_project_metzler_is_idempotent(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        projected, _ = project_metzler(rng.normal(size=(n, n)))
        again, violation = project_metzler(projected)
        assert np.array_equal(again, projected)
        assert violation == 0.0
