"""Exact k-nearest-neighbor queries against a reference sample."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ParameterError

# rows of the query block; bounds the distance matrix held in memory
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class NeighborList:
    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]


def _select_k(dist: np.ndarray, k: int):
    """Take the k smallest entries per row, ties going to the lower column index."""
    if k < dist.shape[1]:
        cand = np.argpartition(dist, k - 1, axis=1)[:, :k]
        kth = np.take_along_axis(dist, cand, axis=1).max(axis=1)
        # argpartition picks arbitrarily among entries equal to the k-th distance
        tied = np.count_nonzero(dist <= kth[:, None], axis=1) > k
        if tied.any():
            cand[tied] = np.argsort(dist[tied], axis=1, kind="stable")[:, :k]
    else:
        cand = np.broadcast_to(np.arange(dist.shape[1]), dist.shape)
    vals = np.take_along_axis(dist, cand, axis=1)
    order = np.lexsort((cand, vals), axis=1)
    idx = np.take_along_axis(cand, order, axis=1)
    return idx, np.take_along_axis(dist, idx, axis=1)


def knn_query(
    queries: np.ndarray,
    reference: np.ndarray,
    k: int,
    exclude: Optional[np.ndarray] = None,
) -> NeighborList:
    """Find the k nearest reference rows of every query row (Euclidean).

    Args:
        queries: (m, q) query points.
        reference: (s, q) reference points, same feature subset as ``queries``.
        k: neighbors per query.
        exclude: optional length-m integer array; entry ``i`` names a reference
            row that query ``i`` must never return (its own copy), or -1.

    Raises:
        ParameterError: when fewer than k reference rows remain for some query.
    """
    queries = np.asarray(queries, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if queries.ndim != 2 or reference.ndim != 2 or queries.shape[1] != reference.shape[1]:
        raise ParameterError(
            f"queries {queries.shape} and reference {reference.shape} must be 2-D with equal width"
        )
    m, s = queries.shape[0], reference.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64)
        if exclude.shape != (m,):
            raise ParameterError("exclude must have one entry per query")
        if np.any(exclude >= s):
            raise ParameterError("exclude names a reference row that does not exist")
        if np.any(exclude >= 0) and s - 1 < k:
            raise ParameterError(f"k={k} exceeds the {s - 1} reference points left after self-exclusion")
    if s < k:
        raise ParameterError(f"k={k} exceeds the {s} available reference points")

    indices = np.empty((m, k), dtype=np.int64)
    distances = np.empty((m, k), dtype=np.float64)
    step = max(1, _BLOCK_ELEMENTS // max(s, 1))
    for start in range(0, m, step):
        stop = min(m, start + step)
        dist = cdist(queries[start:stop], reference)
        if exclude is not None:
            block = exclude[start:stop]
            hit = np.nonzero(block >= 0)[0]
            dist[hit, block[hit]] = np.inf
        indices[start:stop], distances[start:stop] = _select_k(dist, k)
    return NeighborList(indices, distances)
