"""Exact Euclidean nearest-neighbour queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import as_array

# rows of the distance matrix computed per block; bounds memory at ~block*N floats
_BLOCK_ELEMS = 4_000_000


@dataclass(frozen=True)
class NeighborTable:
    """Row i lists the q nearest other points of point i, nearest first.

    Equal distances are ordered by ascending index.
    """

    indices: np.ndarray    # (N, q) int
    distances: np.ndarray  # (N, q) float

    @property
    def q(self) -> int:
        return self.indices.shape[1]

    @property
    def n_points(self) -> int:
        return self.indices.shape[0]

    def as_sets(self) -> list[set]:
        return [set(map(int, row)) for row in self.indices]


def _blocks(n_rows: int, n_cols: int):
    step = max(1, _BLOCK_ELEMS // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


def knn(data, q: int) -> NeighborTable:
    """Brute-force q nearest neighbours of every point, excluding the point itself."""
    x = as_array(data)
    n = x.shape[0]
    if not 1 <= q <= n - 1:
        raise ValueError(f"q must be in [1, {n - 1}] for {n} points, got {q}")

    indices = np.empty((n, q), dtype=np.int64)
    distances = np.empty((n, q))
    for start, stop in _blocks(n, n):
        d = cdist(x[start:stop], x)
        rows = np.arange(stop - start)
        d[rows, rows + start] = np.inf
        # q-th smallest value per row; everything <= it is a candidate
        kth = np.partition(d, q - 1, axis=1)[:, q - 1]
        for r in rows:
            cand = np.flatnonzero(d[r] <= kth[r])
            # candidates come in index order, so a stable sort resolves ties by index
            order = np.argsort(d[r, cand], kind="stable")[:q]
            indices[start + r] = cand[order]
            distances[start + r] = d[r, cand[order]]
    return NeighborTable(indices, distances)


def pairwise_extremes(data) -> tuple[float, float]:
    """(smallest non-zero, largest) distance over all unordered pairs.

    The minimum is nan when every pair coincides.
    """
    x = as_array(data)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    lo, hi = np.inf, 0.0
    for start, stop in _blocks(n, n):
        d = cdist(x[start:stop], x)
        # keep each unordered pair once (j > i)
        mask = np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        vals = d[mask]
        if vals.size:
            hi = max(hi, float(vals.max()))
            nz = vals[vals > 0]
            if nz.size:
                lo = min(lo, float(nz.min()))
    return (lo if np.isfinite(lo) else float("nan")), hi
