import logging

import numpy as np
import pytest
import scipy.linalg as la

from ecosystem.exceptions import BranchCutError, MatrixOverflowError
from ecosystem.graphs import complete, path, star
from ecosystem.matfun import expm, expm_integral, logm, spectral_abscissa, spectral_radius


def test_expm_of_zero_is_identity():
    result = expm(np.zeros((3, 3)))
    assert np.array_equal(result.value, np.eye(3))
    assert result.est_error == 0.0


def test_expm_diagonal_matches_scalar_exponentials():
    result = expm(np.diag([-1.0, 0.5, 2.0]))
    assert np.allclose(np.diag(result.value), np.exp([-1.0, 0.5, 2.0]), rtol=1e-14)
    assert result.est_error < 1e-12


def test_expm_of_metzler_matrix_is_nonnegative(make_system):
    _, _, m = make_system(n=5)
    value = expm(m.matrix * 3.0).value
    assert value.min() >= 0.0


def test_expm_overflow_is_reported():
    with pytest.raises(MatrixOverflowError) as info:
        expm(np.array([[1000.0]]))
    assert info.value.scaling > 0


def test_expm_rejects_non_square():
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))


def test_expm_integral_matches_inverse_formula(pair):
    _, _, m = pair
    E, B = expm_integral(m.matrix, 0.7)
    assert np.allclose(E, la.expm(0.7 * m.matrix), rtol=1e-13)
    assert np.allclose(B, la.solve(m.matrix, E - np.eye(2)), rtol=1e-12)


def test_expm_integral_handles_singular_generator():
    E, B = expm_integral(np.zeros((2, 2)), 2.5)
    assert np.array_equal(E, np.eye(2))
    assert np.allclose(B, 2.5 * np.eye(2))


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_expm_integral_needs_positive_step(dt):
    with pytest.raises(ValueError):
        expm_integral(np.eye(2), dt)


def test_logm_inverts_expm(pair):
    _, _, m = pair
    recovered = logm(la.expm(0.5 * m.matrix)) / 0.5
    assert np.allclose(recovered, m.matrix, rtol=1e-10, atol=1e-12)


def test_logm_of_identity_is_zero():
    assert np.array_equal(logm(np.eye(3)), np.zeros((3, 3)))


def test_logm_rejects_negative_real_eigenvalue():
    with pytest.raises(BranchCutError):
        logm(np.diag([-1.0, 1.0]))


def test_spectral_abscissa():
    assert spectral_abscissa(np.diag([-1.0, -2.0])) == pytest.approx(-1.0)
    assert spectral_abscissa([[-0.1, 1.0], [1.0, -0.1]]) == pytest.approx(0.9)


@pytest.mark.parametrize("adjacency, expected", [(star(4), 2.0), (complete(4), 3.0)])
def test_spectral_radius_of_known_graphs(adjacency, expected):
    rho, vector = spectral_radius(adjacency)
    assert rho == pytest.approx(expected, rel=1e-9)
    assert vector.sum() == pytest.approx(1.0)
    assert np.all(vector >= 0.0)
    assert np.allclose(adjacency @ vector, rho * vector, atol=1e-8)


def test_spectral_radius_of_zero_matrix():
    rho, _ = spectral_radius(np.zeros((3, 3)))
    assert rho == 0.0


def test_spectral_radius_rejects_negative_entries():
    with pytest.raises(ValueError):
        spectral_radius([[0.0, -1.0], [1.0, 0.0]])


@pytest.mark.parametrize("adjacency", [star(4), path(9)])
def test_bipartite_fallback_is_not_a_warning(adjacency, caplog):
    caplog.set_level(logging.INFO, logger="ecosystem.matfun")
    rho, _ = spectral_radius(adjacency, max_iter=200)
    assert rho == pytest.approx(float(np.max(np.abs(np.linalg.eigvals(adjacency)))))
    assert any("dense eigen-solve" in r.getMessage() for r in caplog.records)
    assert not [r for r in caplog.records if r.levelno >= logging.WARNING]


def test_expm_integral_solves_the_integral_identity(rng, make_system):
    for _ in range(100):
        _, _, m = make_system(n=int(rng.integers(2, 7)))
        dt = rng.uniform(0.1, 2.0)
        E, B = expm_integral(m.matrix, dt)
        expected = la.solve(m.matrix, E - np.eye(m.n))
        assert np.linalg.norm(B - expected) <= 1e-10 * np.linalg.norm(expected)
