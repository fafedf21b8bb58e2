from typing import Optional, Sequence

import numpy as np


class EcosystemError(Exception):
    """Base class for every error raised by the toolkit."""


class ModelError(EcosystemError, ValueError):
    """The inputs do not describe a valid model."""


class DimensionMismatchError(ModelError):
    pass


class StateRangeError(ModelError):
    pass


class ScheduleError(ModelError):
    pass


class GridMismatchError(ModelError):
    pass


class SnapshotFormatError(ModelError):
    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class SaturationError(ModelError):
    """Raised when the add-on strength saturates before the first add-on."""


class NumericalError(EcosystemError, RuntimeError):
    """A numerical routine failed on otherwise valid inputs."""


class EigenvalueConvergenceError(NumericalError):
    pass


class NotHurwitzError(NumericalError):
    def __init__(self, abscissa: float):
        self.abscissa = abscissa
        super().__init__(f"Generator is not Hurwitz (spectral abscissa {abscissa:.6g})")


class SingularGeneratorError(NumericalError):
    pass


class MatrixOverflowError(NumericalError):
    def __init__(self, scaling: int, norm: float):
        self.scaling = scaling
        self.norm = norm
        super().__init__(
            f"Matrix exponential overflowed (1-norm {norm:.6g}, {scaling} squarings)"
        )


class BranchCutError(NumericalError):
    """The principal matrix logarithm does not exist."""


class AliasingError(BranchCutError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        super().__init__(message)


class PowerIterationError(ConvergenceError):
    pass


class PeanoBakerConvergenceError(ConvergenceError):
    pass


class StepSizeError(NumericalError):
    def __init__(self, clamp_events: int, evaluations: int):
        self.clamp_events = clamp_events
        self.evaluations = evaluations
        super().__init__(
            f"Step size rejected: {clamp_events} clamping events "
            f"over {evaluations} right-hand-side evaluations"
        )


class ZeroBaselineError(NumericalError):
    pass


class IdentifiabilityError(NumericalError):
    def __init__(self, message: str, directions: Sequence[np.ndarray] = ()):
        self.directions = [np.asarray(d) for d in directions]
        super().__init__(message)
