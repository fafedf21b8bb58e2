from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer
from typing_extensions import Annotated


def _to_array(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float, copy=True)
    if not np.all(np.isfinite(array)):
        raise ValueError("array entries must be finite")
    array.setflags(write=False)
    return array


def _to_array_allow_nan(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _to_list(array: np.ndarray) -> Any:
    return np.where(np.isnan(array), None, array).tolist()


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_to_array),
    PlainSerializer(_to_list, return_type=list),
]

# NaN marks an absent entry (serialized as null).
SparseFloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_to_array_allow_nan),
    PlainSerializer(_to_list, return_type=list),
]


class ArrayModel(BaseModel):
    """Immutable value type whose array fields are read-only float64 arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @staticmethod
    def require_square(name: str, array: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] < 1:
            raise ValueError(f"{name} must be a nonempty square matrix, got shape {array.shape}")
        if n is not None and array.shape[0] != n:
            raise ValueError(f"{name} must be {n}x{n}, got shape {array.shape}")
        return array

    @staticmethod
    def require_vector(name: str, array: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        if array.ndim != 1:
            raise ValueError(f"{name} must be a vector, got shape {array.shape}")
        if n is not None and array.shape[0] != n:
            raise ValueError(f"{name} must have length {n}, got {array.shape[0]}")
        return array

    @staticmethod
    def off_diagonal(array: np.ndarray) -> np.ndarray:
        return array[~np.eye(array.shape[0], dtype=bool)]
