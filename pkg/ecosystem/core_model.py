import logging
import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg as la

from ecosystem.exceptions import DimensionMismatchError, NotHurwitzError, SingularGeneratorError
from ecosystem.matfun import spectral_abscissa
from ecosystem.models.network import DecayVector, Generator, InteractionMatrix

logger = logging.getLogger(__name__)


class HurwitzCheck(NamedTuple):
    hurwitz: bool
    abscissa: float


def assemble_generator(lam: InteractionMatrix, delta: DecayVector) -> Generator:
    """
    Build M = Lambda - diag(delta).

    Args:
        lam (InteractionMatrix): Product-product enhancement rates.
        delta (DecayVector): Per-product decay rates.

    Returns:
        Generator: Metzler generator with off-diagonal Lambda and diagonal -delta.
    """
    if lam.n != len(delta):
        raise DimensionMismatchError(f"Lambda is {lam.n}x{lam.n} but delta has length {len(delta)}")
    return Generator(matrix=lam.entries - np.diag(delta.rates))


def laplacian(lam: InteractionMatrix) -> np.ndarray:
    """L = D - Lambda, D the diagonal of row sums."""
    return np.diag(lam.entries.sum(axis=1)) - lam.entries


def is_hurwitz(m: Generator) -> HurwitzCheck:
    abscissa = spectral_abscissa(m.matrix)
    return HurwitzCheck(hurwitz=abscissa < 0.0, abscissa=abscissa)


def equilibrium(m: Generator, u0) -> np.ndarray:
    """
    Steady state -M^{-1} u0 of a Hurwitz generator under constant input.

    Args:
        m (Generator): Hurwitz Metzler generator.
        u0: Nonnegative constant input.

    Returns:
        np.ndarray: The equilibrium, entrywise nonnegative.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (m.n,):
        raise DimensionMismatchError(f"input must have length {m.n}, got shape {u0.shape}")
    if np.any(u0 < 0.0):
        raise ValueError("input must be >= 0")

    check = is_hurwitz(m)
    if not check.hurwitz:
        raise NotHurwitzError(check.abscissa)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", la.LinAlgWarning)
            return la.solve(-m.matrix, u0)
    except (la.LinAlgError, la.LinAlgWarning) as e:
        raise SingularGeneratorError(f"Equilibrium solve failed: {e}") from e
