import logging
from typing import List

import numpy as np
import pandas as pd

from ecosystem._constants import EST__SPACING_RTOL
from ecosystem.exceptions import SnapshotFormatError
from ecosystem.models.results import SnapshotSet
from ecosystem.tables.base import BaseTable

logger = logging.getLogger(__name__)


class SnapshotTable(BaseTable):
    """
    Snapshot CSV with header t,alpha_1..alpha_n,u_1..u_n.

    Rows are numbered from 1 (the first data row) in validation errors.
    """

    @staticmethod
    def header(n: int) -> List[str]:
        return ["t"] + [f"alpha_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, n + 1)]

    def load_data(self, path: str) -> None:
        try:
            self.data = pd.read_csv(path, dtype=str, keep_default_na=False)
            logger.info(f"Snapshot data loaded from {path}")
        except Exception as e:
            logger.error(f"Error loading snapshot data: {str(e)}")
            raise

    def process_data(self) -> None:
        try:
            self._check_header()
            self._to_numeric()
            self._check_values()
            self._check_spacing()
            logger.info(f"Snapshot data processed successfully ({len(self.data)} rows)")
        except SnapshotFormatError as e:
            logger.error(f"Error processing snapshot data: {str(e)}")
            raise

    @property
    def n(self) -> int:
        return (self.data.shape[1] - 1) // 2

    def _check_header(self) -> None:
        columns = [c.strip() for c in self.data.columns]
        if len(columns) < 3 or len(columns) % 2 == 0:
            raise SnapshotFormatError(f"expected columns t,alpha_1..alpha_n,u_1..u_n, got {','.join(columns)}")
        expected = self.header((len(columns) - 1) // 2)
        if columns != expected:
            raise SnapshotFormatError(f"expected header {','.join(expected)}, got {','.join(columns)}")
        if self.data.empty:
            raise SnapshotFormatError("snapshot file has no data rows")
        self.data.columns = columns

    def _to_numeric(self) -> None:
        numeric = self.data.apply(pd.to_numeric, errors="coerce")
        bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
        if bad.values.any():
            row, col = np.argwhere(bad.values)[0]
            raise SnapshotFormatError(
                f"column {self.data.columns[col]} holds a non-numeric value {self.data.iat[row, col]!r}", row=row + 1
            )
        self.data = numeric.astype(float)

    def _check_values(self) -> None:
        values = self.data.iloc[:, 1:].to_numpy()
        negative = np.argwhere(values < 0.0)
        if negative.size:
            row, col = negative[0]
            raise SnapshotFormatError(f"column {self.data.columns[col + 1]} must be >= 0", row=row + 1)

    def _check_spacing(self) -> None:
        t = self.data["t"].to_numpy()
        if t.size < 2:
            return
        gaps = np.diff(t)
        dt = gaps[0]
        if dt <= 0.0:
            raise SnapshotFormatError("time column must be strictly increasing", row=2)
        off = np.flatnonzero(np.abs(gaps - dt) > EST__SPACING_RTOL * dt)
        if off.size:
            raise SnapshotFormatError(
                f"sampling is not uniform (gap {gaps[off[0]]:.17g}, expected {dt:.17g})", row=int(off[0]) + 2
            )

    def to_snapshots(self, dt: float = 1.0) -> SnapshotSet:
        """Snapshot set; dt is only used when the table holds a single row."""
        t = self.data["t"].to_numpy()
        n = self.n
        if t.size >= 2:
            dt = float(t[1] - t[0])
        return SnapshotSet(
            dt=dt,
            states=self.data.iloc[:, 1 : n + 1].to_numpy(),
            inputs=self.data.iloc[:, n + 1 :].to_numpy(),
            t0=float(t[0]),
        )

    @classmethod
    def from_snapshots(cls, snapshots: SnapshotSet) -> "SnapshotTable":
        table = cls()
        n = snapshots.n
        table.data = pd.DataFrame(
            np.column_stack([snapshots.times, snapshots.states, snapshots.inputs]), columns=cls.header(n)
        )
        return table
