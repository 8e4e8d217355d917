"""Exact k-nearest-neighbor queries in (x, y, scale * t) space."""

from typing import Tuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

# below this size a brute-force scan beats building a tree
BRUTE_FORCE_LIMIT = 1000


def event_coordinates(events: np.ndarray, time_scale: float, t_origin: int = 0) -> np.ndarray:
    """(N, 4) x, y, t, p rows -> (N, 3) float64 metric coordinates."""
    coords = np.zeros((len(events), 3), dtype=np.float64)
    if len(events):
        coords[:, 0] = events[:, 0]
        coords[:, 1] = events[:, 1]
        coords[:, 2] = (events[:, 2] - t_origin) * time_scale
    return coords


def knn(coords: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distances and indices of the ``k`` nearest other points of every point.

    The query point itself is never returned, even when it has exact duplicates;
    with fewer than ``k + 1`` points every other point is returned. Rows are
    sorted by distance.
    """
    n = len(coords)
    if n < 2 or k < 1:
        return np.zeros((n, 0)), np.zeros((n, 0), dtype=np.int64)
    n_neighbors = min(k + 1, n)
    algorithm = "brute" if n < BRUTE_FORCE_LIMIT else "kd_tree"
    index = NearestNeighbors(n_neighbors=n_neighbors, algorithm=algorithm).fit(coords)
    dist, ind = index.kneighbors(coords)

    is_self = ind == np.arange(n)[:, None]
    # duplicates can push the query point out of its own result list
    missing = ~is_self.any(axis=1)
    is_self[missing, -1] = True
    keep = ~is_self
    width = n_neighbors - 1
    return dist[keep].reshape(n, width), ind[keep].reshape(n, width)
