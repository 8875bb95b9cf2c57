"""Neighbourhood-preservation scores: point-wise Jaccard distance and its mean (AJD)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import as_array
from .neighbors import NeighborTable, knn

DEFAULT_H = 20


@dataclass(frozen=True)
class JaccardReport:
    h: int
    per_point: np.ndarray

    @property
    def ajd(self) -> float:
        return float(self.per_point.mean())

    def rows(self):
        for i, j in enumerate(self.per_point):
            yield i, float(j)


def jaccard_point(a, b) -> float:
    """Jaccard distance between two index sets: (|a u b| - |a n b|) / |a u b|."""
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("Jaccard distance needs two non-empty sets")
    union = len(a | b)
    return (union - len(a & b)) / union


def jaccard_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Jaccard distance between two (N, h) tables of distinct indices."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("tables must have the same number of rows")
    s = np.sort(np.concatenate([a, b], axis=1), axis=1)
    # each row of a and b is duplicate-free, so repeats are exactly the intersection
    inter = np.count_nonzero(s[:, 1:] == s[:, :-1], axis=1)
    union = a.shape[1] + b.shape[1] - inter
    return (union - inter) / union


def ajd_from_tables(high: NeighborTable, low: NeighborTable) -> JaccardReport:
    if high.n_points != low.n_points:
        raise ValueError("neighbour tables cover different numbers of points")
    return JaccardReport(high.q, jaccard_rows(high.indices, low.indices))


def ajd(high, low, h: int = DEFAULT_H) -> JaccardReport:
    """Compare each point's h nearest neighbours in ``high`` with those in ``low``.

    Row i of both inputs must describe the same point.
    """
    x = as_array(high)
    y = as_array(low)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if not 1 <= h <= n - 1:
        raise ValueError(f"h must be in [1, {n - 1}], got {h}")
    return ajd_from_tables(knn(x, h), knn(y, h))
