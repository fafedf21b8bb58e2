from typing import List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from ecosystem._constants import POSITIVITY_TOL
from ecosystem.models.base import ArrayModel, FloatArray, SparseFloatArray
from ecosystem.models.signals import InfluenceState
from ecosystem.utils import check_nonnegative


class MatFunResult(ArrayModel):
    value: FloatArray
    est_error: float

    @model_validator(mode="after")
    def _validate_error(self) -> "MatFunResult":
        if not np.isfinite(self.est_error) or self.est_error < 0.0:
            raise ValueError("est_error must be finite and nonnegative")
        return self


class Trajectory(ArrayModel):
    times: FloatArray
    states: FloatArray
    mode: Literal["linear", "saturating", "sis"] = "linear"
    clamp_events: int = 0

    @model_validator(mode="after")
    def _validate_trajectory(self) -> "Trajectory":
        self.require_vector("times", self.times)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states must hold one n-vector per sample time")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        scale = max(1.0, float(np.max(np.abs(self.states)))) if self.states.size else 1.0
        if self.states.size and float(np.min(self.states)) < -POSITIVITY_TOL * scale:
            raise ValueError(f"trajectory left the nonnegative orthant (min {float(np.min(self.states)):.3g})")
        if self.mode != "linear" and np.any(self.states > 1.0 + POSITIVITY_TOL):
            raise ValueError("bounded trajectory exceeded 1")
        return self

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def state(self, index: int) -> InfluenceState:
        return InfluenceState(
            time=float(self.times[index]), values=self.states[index], saturating=self.mode != "linear"
        )

    @property
    def final(self) -> InfluenceState:
        return self.state(-1)

    def to_frame(self) -> pd.DataFrame:
        prefix = "x" if self.mode == "sis" else "alpha"
        frame = pd.DataFrame(self.states, columns=[f"{prefix}_{i + 1}" for i in range(self.n)])
        frame.insert(0, "t", self.times)
        return frame


class TransitionMatrix(ArrayModel):
    """Phi(t_to, t_from): maps the state at t_from to the state at t_to."""

    t_from: float
    t_to: float
    matrix: FloatArray

    @model_validator(mode="after")
    def _validate_transition(self) -> "TransitionMatrix":
        self.require_square("transition matrix", self.matrix)
        if self.t_to < self.t_from:
            raise ValueError("transition matrices run forward in time (t_to >= t_from)")
        return self

    def compose(self, earlier: "TransitionMatrix") -> "TransitionMatrix":
        """Phi(t, s) Phi(s, t0) = Phi(t, t0)."""
        scale = max(1.0, abs(self.t_from))
        if abs(earlier.t_to - self.t_from) > 1e-12 * scale:
            raise ValueError("composition needs matching intermediate times")
        return TransitionMatrix(t_from=earlier.t_from, t_to=self.t_to, matrix=self.matrix @ earlier.matrix)

    def apply(self, state: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(state, dtype=float)

    @property
    def min_entry(self) -> float:
        return float(np.min(self.matrix))


class PersistenceResult(ArrayModel):
    status: Literal["extinct", "persistent", "inconclusive"]
    final_state: FloatArray
    final_norm: float
    relative_change: float


class SweepPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float
    status: Literal["extinct", "persistent", "inconclusive"]
    final_norm: float


class SweepResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: Tuple[SweepPoint, ...]
    critical_tau: float
    bracket: Optional[Tuple[float, float]] = None
    monotone: bool = True

    @property
    def inconclusive(self) -> List[SweepPoint]:
        return [p for p in self.points if p.status == "inconclusive"]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "tau": [p.tau for p in self.points],
                "status": [p.status for p in self.points],
                "final_norm": [p.final_norm for p in self.points],
            }
        )


class AmplificationReport(ArrayModel):
    times: FloatArray
    per_product: SparseFloatArray
    baseline: Trajectory
    coupled: Trajectory
    violations: int = 0

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.per_product)

    @property
    def min_defined(self) -> float:
        values = self.per_product[self.defined]
        return float(np.min(values)) if values.size else float("nan")

    @property
    def max_defined(self) -> float:
        values = self.per_product[self.defined]
        return float(np.max(values)) if values.size else float("nan")


class SensitivityReport(ArrayModel):
    edge_values: FloatArray
    node_values: FloatArray
    delta_J: float
    quadrature_error: float = 0.0
    coarse_grid: bool = False


class EdgeROI(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: int
    target: int
    value: float
    cost: float
    roi: float


class PolicyDerivative(BaseModel):
    model_config = ConfigDict(frozen=True)

    interaction_term: float
    decay_term: float
    dJ_deta: float
    verdict: Literal["increase", "decrease", "neutral"]


class PerceptionParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: PositiveFloat
    beta_addon: PositiveFloat


class SnapshotSet(ArrayModel):
    """Uniformly spaced snapshots; inputs[k] is held over [t_k, t_k + dt)."""

    dt: float
    states: FloatArray
    inputs: FloatArray
    t0: float = 0.0

    @model_validator(mode="after")
    def _validate_snapshots(self) -> "SnapshotSet":
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError("states must be a nonempty sequence of n-vectors")
        if self.inputs.shape != self.states.shape:
            raise ValueError("inputs must match states one-to-one")
        check_nonnegative("states", self.states)
        if np.any(self.inputs < 0.0):
            raise ValueError("inputs must be >= 0")
        return self

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])


class DiscreteFit(ArrayModel):
    A_hat: FloatArray
    B_hat: FloatArray
    residual_rms: float
    singular_values: FloatArray
    b_identifiable: bool = True
    deficient_directions: Optional[FloatArray] = None


class FitResult(ArrayModel):
    A_hat: FloatArray
    B_hat: FloatArray
    M_hat: FloatArray
    residual_rms: float
    metzler_violation: float
    l1_weight: float = 0.0
    iterations: int = 0

    @model_validator(mode="after")
    def _validate_fit(self) -> "FitResult":
        if np.any(self.off_diagonal(self.M_hat) < 0.0):
            raise ValueError("M_hat must be Metzler")
        if self.residual_rms < 0.0:
            raise ValueError("residual_rms must be >= 0")
        return self

    @property
    def support(self) -> np.ndarray:
        mask = self.M_hat != 0.0
        np.fill_diagonal(mask, False)
        return mask
