import logging
import os
from typing import Iterable, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from scipy.integrate import trapezoid

from ecosystem._constants import POSITIVITY_TOL


def _setup_logger(level: Optional[str] = None) -> logging.Logger:
    load_dotenv()
    logger = logging.getLogger("ecosystem")
    logger.setLevel(level or os.getenv("ECOSYSTEM_LOG_LEVEL", "INFO").upper())

    if not logger.handlers:
        formatter = logging.Formatter(
            "\033[1;32m%(asctime)s\033[0m - \033[1;34m%(name)s\033[0m - \033[1;31m%(levelname)s\033[0m - %(message)s"
        )

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    return logger


def gauss_legendre_panels(
    a: float, b: float, panels: int, breakpoints: Iterable[float] = ()
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite 3-point Gauss-Legendre rule on [a, b].

    Panels never straddle a breakpoint, so piecewise-smooth integrands are
    integrated panel by panel.

    Args:
        a (float): Lower limit.
        b (float): Upper limit.
        panels (int): Number of uniform panels per breakpoint-free piece.
        breakpoints (Iterable[float]): Discontinuities of the integrand.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Nodes and weights.
    """
    xi, wi = np.polynomial.legendre.leggauss(3)
    edges = split_interval(a, b, breakpoints)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        grid = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(grid)
        mid = 0.5 * (grid[:-1] + grid[1:])
        nodes.append((mid[:, None] + half[:, None] * xi[None, :]).ravel())
        weights.append((half[:, None] * wi[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def split_interval(a: float, b: float, breakpoints: Iterable[float] = ()) -> np.ndarray:
    """Edges of [a, b] refined by the breakpoints strictly inside it."""
    scale = max(1.0, abs(a), abs(b))
    inner = [t for t in breakpoints if a + 1e-12 * scale < t < b - 1e-12 * scale]
    return np.array([a, *sorted(inner), b], dtype=float)


def subdivide(edges: np.ndarray, max_width: float) -> np.ndarray:
    """Insert uniform points so that no gap between edges exceeds max_width."""
    out = [edges[0]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(np.ceil((hi - lo) / max_width))) if max_width > 0 else 1
        out.extend(np.linspace(lo, hi, pieces + 1)[1:])
    return np.array(out)


def merge_times(*groups: Iterable[float], rtol: float = 1e-12) -> np.ndarray:
    """Sorted union of time points, collapsing values closer than rtol·scale."""
    values = np.sort(np.concatenate([np.asarray(list(g), dtype=float) for g in groups]))
    if values.size == 0:
        return values
    scale = max(1.0, float(np.max(np.abs(values))))
    keep = np.concatenate([[True], np.diff(values) > rtol * scale])
    return values[keep]


def trapezoid_with_estimate(values: np.ndarray, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trapezoid integral along the first axis with a Richardson error estimate.

    The estimate compares the full grid against every other grid point; the
    endpoints are always kept.

    Args:
        values (np.ndarray): Samples, time along axis 0.
        times (np.ndarray): Sample times.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Integral and absolute error estimate.
    """
    fine = trapezoid(values, times, axis=0)
    if len(times) < 3:
        return fine, np.zeros_like(fine)
    idx = np.unique(np.concatenate([np.arange(0, len(times), 2), [len(times) - 1]]))
    coarse = trapezoid(values[idx], times[idx], axis=0)
    return fine, np.abs(fine - coarse) / 3.0


def check_nonnegative(name: str, values: np.ndarray, tol: float = POSITIVITY_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    if values.size and float(np.min(values)) < -tol * scale:
        raise ValueError(f"{name} must be nonnegative (min entry {float(np.min(values)):.6g})")
