import logging
from typing import Optional

import networkx as nx
import numpy as np

from ecosystem.exceptions import ModelError

logger = logging.getLogger(__name__)

GRAPH_FAMILIES = ("star", "path", "cycle", "complete", "erdos_renyi", "matrix")


def _adjacency(graph: nx.Graph) -> np.ndarray:
    return nx.to_numpy_array(graph, nodelist=sorted(graph.nodes), dtype=float)


def star(leaves: int) -> np.ndarray:
    """Hub 0 joined to `leaves` leaves; lambda_max = sqrt(leaves)."""
    return _adjacency(nx.star_graph(leaves))


def path(size: int) -> np.ndarray:
    return _adjacency(nx.path_graph(size))


def cycle(size: int) -> np.ndarray:
    return _adjacency(nx.cycle_graph(size))


def complete(size: int) -> np.ndarray:
    return _adjacency(nx.complete_graph(size))


def erdos_renyi(size: int, p: float, seed: int = 0) -> np.ndarray:
    return _adjacency(nx.erdos_renyi_graph(size, p, seed=seed))


def from_matrix(matrix) -> np.ndarray:
    """Validate an explicit nonnegative square adjacency."""
    adjacency = np.asarray(matrix, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ModelError(f"adjacency must be square, got shape {adjacency.shape}")
    if np.any(adjacency < 0.0) or not np.all(np.isfinite(adjacency)):
        raise ModelError("adjacency entries must be finite and nonnegative")
    return adjacency


def build_graph(
    family: str,
    size: Optional[int] = None,
    matrix=None,
    p: Optional[float] = None,
    seed: int = 0,
) -> np.ndarray:
    """
    Adjacency matrix of a named graph family.

    Args:
        family (str): One of "star", "path", "cycle", "complete", "erdos_renyi", "matrix".
        size (Optional[int]): Number of leaves for a star, number of nodes otherwise.
        matrix: Explicit adjacency for the "matrix" family.
        p (Optional[float]): Edge probability for "erdos_renyi".
        seed (int): Seed for random families.

    Returns:
        np.ndarray: Dense adjacency matrix.
    """
    if family == "matrix":
        if matrix is None:
            raise ModelError("graph family 'matrix' needs an explicit matrix")
        return from_matrix(matrix)
    if family not in GRAPH_FAMILIES:
        raise ModelError(f"unknown graph family {family!r}; expected one of {', '.join(GRAPH_FAMILIES)}")
    if size is None or size < 1:
        raise ModelError(f"graph family {family!r} needs a positive size")

    if family == "erdos_renyi":
        if p is None or not 0.0 <= p <= 1.0:
            raise ModelError("erdos_renyi needs an edge probability p in [0, 1]")
        adjacency = erdos_renyi(size, p, seed)
    else:
        adjacency = {"star": star, "path": path, "cycle": cycle, "complete": complete}[family](size)

    logger.debug(f"Built {family} graph with {adjacency.shape[0]} nodes and {int(adjacency.sum()) // 2} edges")
    return adjacency
