from typing import Optional

import numpy as np
from pydantic import field_validator, model_validator

from ecosystem.models.base import ArrayModel, FloatArray


class InteractionMatrix(ArrayModel):
    """Lambda: entry (i, j) is how strongly product j enhances product i."""

    entries: FloatArray

    @field_validator("entries")
    @classmethod
    def _validate_entries(cls, value: np.ndarray) -> np.ndarray:
        cls.require_square("interaction matrix", value)
        if np.any(np.diag(value) != 0.0):
            raise ValueError("interaction matrix diagonal must be exactly 0")
        if np.any(cls.off_diagonal(value) < 0.0):
            raise ValueError("interaction matrix off-diagonal entries must be >= 0")
        return value

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "InteractionMatrix":
        return cls(entries=np.zeros((n, n)))


class DecayVector(ArrayModel):
    """
    Per-product decay rates delta_i.

    When costs are given the rates follow the affine map
    delta_i = base_i + sensitivity_i * C_i.
    """

    rates: FloatArray
    costs: Optional[FloatArray] = None
    base: Optional[FloatArray] = None
    sensitivity: Optional[FloatArray] = None

    @model_validator(mode="after")
    def _validate_rates(self) -> "DecayVector":
        self.require_vector("decay rates", self.rates)
        if np.any(self.rates <= 0.0):
            raise ValueError("decay rates must be strictly positive")
        if self.costs is not None:
            n = self.rates.shape[0]
            if self.base is None or self.sensitivity is None:
                raise ValueError("cost-based decay needs both base and sensitivity")
            for name, value in (("costs", self.costs), ("base", self.base), ("sensitivity", self.sensitivity)):
                self.require_vector(name, value, n)
            if np.any(self.base <= 0.0):
                raise ValueError("decay base must be strictly positive")
            if np.any(self.sensitivity < 0.0):
                raise ValueError("decay sensitivity must be >= 0")
            if not np.allclose(self.rates, self.base + self.sensitivity * self.costs, rtol=1e-12, atol=0.0):
                raise ValueError("decay rates must equal base + sensitivity * costs")
        return self

    @classmethod
    def from_costs(cls, base, sensitivity, costs) -> "DecayVector":
        base, sensitivity, costs = (np.asarray(v, dtype=float) for v in (base, sensitivity, costs))
        return cls(rates=base + sensitivity * costs, costs=costs, base=base, sensitivity=sensitivity)

    def __len__(self) -> int:
        return self.rates.shape[0]


class Generator(ArrayModel):
    """Metzler matrix M driving d(alpha)/dt = M alpha + u."""

    matrix: FloatArray

    @field_validator("matrix")
    @classmethod
    def _validate_metzler(cls, value: np.ndarray) -> np.ndarray:
        cls.require_square("generator", value)
        if np.any(cls.off_diagonal(value) < 0.0):
            raise ValueError("generator must be Metzler (off-diagonal entries >= 0)")
        return value

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def interactions(self) -> np.ndarray:
        return self.matrix - np.diag(np.diag(self.matrix))

    @property
    def decay(self) -> np.ndarray:
        return -np.diag(self.matrix).copy()


class CrowdingMatrix(ArrayModel):
    """Crowding penalties c_ij between competing products."""

    entries: FloatArray

    @field_validator("entries")
    @classmethod
    def _validate_entries(cls, value: np.ndarray) -> np.ndarray:
        cls.require_square("crowding matrix", value)
        if np.any(value < 0.0):
            raise ValueError("crowding entries must be >= 0")
        if np.any(np.diag(value) != 0.0):
            raise ValueError("crowding matrix diagonal must be exactly 0")
        return value

    @classmethod
    def zeros(cls, n: int) -> "CrowdingMatrix":
        return cls(entries=np.zeros((n, n)))


class AdoptionSystem(ArrayModel):
    """Social adoption layer: adjacency over user segments, adoption and churn rates."""

    adjacency: FloatArray
    beta: float
    delta: float

    @model_validator(mode="after")
    def _validate_system(self) -> "AdoptionSystem":
        self.require_square("adjacency", self.adjacency)
        if np.any(self.adjacency < 0.0):
            raise ValueError("adjacency must be nonnegative")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if self.delta <= 0.0:
            raise ValueError("delta must be > 0")
        return self

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def tau(self) -> float:
        return self.beta / self.delta
