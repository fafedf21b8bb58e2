import json
import logging
import math
import os
from typing import Any, Optional

import numpy as np
import pandas as pd

from ecosystem._constants import CSV_FLOAT_FORMAT, DEFAULT_OUTPUT_DIR
from ecosystem.models.results import SweepResult, Trajectory

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


class BaseArtifact:
    def __init__(self, output_dir: Optional[str] = None):
        """
        Initialize the artifact writer with its output directory

        Args:
            output_dir (Optional[str]): Target directory. Defaults to
                ECOSYSTEM_OUTPUT_DIR, then "output".
        """
        self.data: Optional[pd.DataFrame] = None
        self.output_dir = output_dir or os.getenv("ECOSYSTEM_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)

    def _write_output(self, filename: str, fmt: str = "csv") -> str:
        """
        Write the data frame as CSV or column-oriented JSON

        Args:
            filename (str): File name without extension
            fmt (str): "csv" or "json"

        Returns:
            str: Path of the written file
        """
        try:
            os.makedirs(self.output_dir, exist_ok=True)

            path = os.path.join(self.output_dir, f"{filename}.{fmt}")
            if fmt == "csv":
                self.data.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
            elif fmt == "json":
                with open(path, "w", encoding="utf-8") as f:
                    f.write(dumps({column: self.data[column].tolist() for column in self.data.columns}))
            else:
                raise ValueError(f"unknown output format {fmt!r}")
            logger.info(f"Successfully wrote {filename} to {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing {filename}: {str(e)}")
            raise

    def _write_json(self, filename: str, payload: Any) -> str:
        try:
            os.makedirs(self.output_dir, exist_ok=True)

            path = os.path.join(self.output_dir, f"{filename}.json")
            with open(path, "w", encoding="utf-8") as f:
                f.write(dumps(payload))
            logger.info(f"Successfully wrote {filename} to {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing {filename}: {str(e)}")
            raise


class TrajectoryArtifact(BaseArtifact):
    def sync(self, trajectory: Trajectory, inputs: Optional[np.ndarray] = None, fmt: str = "csv") -> str:
        """
        Write a trajectory table: t, alpha_1..alpha_n and, when given, the
        input held at each sample as u_1..u_n

        Args:
            trajectory (Trajectory): Sampled trajectory
            inputs (Optional[np.ndarray]): One input row per sample
            fmt (str): "csv" or "json"
        """
        self.data = trajectory.to_frame()
        if inputs is not None:
            for i, column in enumerate(np.asarray(inputs, dtype=float).T, start=1):
                self.data[f"u_{i}"] = column
        return self._write_output("trajectory", fmt)


class SweepArtifact(BaseArtifact):
    def sync(self, sweep: SweepResult, fmt: str = "csv") -> str:
        self.data = sweep.to_frame()
        return self._write_output("sweep", fmt)


class ReportArtifact(BaseArtifact):
    def sync(self, name: str, payload: Any) -> str:
        return self._write_json(name, payload)


class SupportArtifact(BaseArtifact):
    def sync(self, frame: pd.DataFrame, fmt: str = "csv") -> str:
        self.data = frame
        return self._write_output("support", fmt)
