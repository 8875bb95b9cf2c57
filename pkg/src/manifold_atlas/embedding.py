"""Per-cluster PCA charts, AJD-versus-dimension sweeps and the dimension verdict."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterCover
from .dataset import as_array
from .distortion import DEFAULT_H, jaccard_rows
from .neighbors import knn

DEFAULT_TAU = 0.1
DEFAULT_DELTA = 2


class RankError(ValueError):
    """Requested more principal directions than the data supports."""


@dataclass(frozen=True)
class PcaChart:
    cluster_id: int
    mean: np.ndarray             # (m,)
    basis: np.ndarray            # (m, n), orthonormal columns
    singular_values: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def m(self) -> int:
        return self.basis.shape[0]


def _svd(x: np.ndarray):
    """Centre and decompose; returns mean, singular values, right singular vectors
    as columns, and the numerical rank."""
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    v = vt.T
    # make the largest-magnitude entry of every direction positive
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivot, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    tol = (s[0] if s.size else 0.0) * max(x.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(s > tol)) if s.size and s[0] > 0 else 0
    return mean, s, v, rank


def fit_pca(points, n: int, cluster_id: int = -1) -> PcaChart:
    """Top-n principal directions of one cluster."""
    x = as_array(points)
    size, m = x.shape
    if size < 2:
        raise ValueError("need at least two points to fit PCA")
    if not 1 <= n <= min(size - 1, m):
        raise ValueError(f"n must be in [1, {min(size - 1, m)}], got {n}")
    mean, s, v, rank = _svd(x)
    if n > rank:
        raise RankError(f"cluster {cluster_id}: requested {n} dimensions but data rank is {rank}")
    return PcaChart(cluster_id, mean, v[:, :n].copy(), s[:n].copy())


def _check_dim(chart: PcaChart, x: np.ndarray, expected: int, what: str):
    if x.shape[-1] != expected:
        raise ValueError(f"{what} has dimension {x.shape[-1]}, chart expects {expected}")


def project(chart: PcaChart, x) -> np.ndarray:
    """basis^T (x - mean); accepts one vector or a row-stacked batch."""
    x = np.asarray(x, dtype=float)
    _check_dim(chart, x, chart.m, "input")
    return (x - chart.mean) @ chart.basis


def reconstruct(chart: PcaChart, y) -> np.ndarray:
    """basis y + mean, the linear pseudo-inverse of project."""
    y = np.asarray(y, dtype=float)
    _check_dim(chart, y, chart.n, "embedding")
    return y @ chart.basis.T + chart.mean


@dataclass
class AjdSweep:
    h: int
    d_max: int
    curves: dict = field(default_factory=dict)   # cluster id -> (dims, ajd) arrays
    ranks: dict = field(default_factory=dict)    # cluster id -> numerical rank
    skipped: list = field(default_factory=list)  # cluster ids too small for h

    def mean_curve(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean AJD at each dimension over the clusters that reach it."""
        if not self.curves:
            return np.empty(0, dtype=int), np.empty(0)
        top = max(int(d[-1]) for d, _ in self.curves.values())
        dims = np.arange(1, top + 1)
        means = []
        for d in dims:
            vals = [a[d - 1] for ds, a in self.curves.values() if len(ds) >= d]
            means.append(float(np.mean(vals)))
        return dims, np.array(means)

    def long_rows(self):
        """(cluster_id, dimension, ajd) rows sorted by cluster then dimension."""
        for c in sorted(self.curves):
            dims, vals = self.curves[c]
            for d, a in zip(dims, vals):
                yield c, int(d), float(a)

    def value(self, cluster_id: int, d: int) -> float:
        dims, vals = self.curves[cluster_id]
        return float(vals[d - 1])


def cluster_ajd_curve(points, h: int, d_max: int | None = None):
    """AJD between one cluster and its PCA projections for d = 1..min(d_max, size-1, rank).

    Truncating one full decomposition gives the same top-d basis as refitting
    at every d.
    """
    x = as_array(points)
    size, m = x.shape
    d_max = m if d_max is None else d_max
    mean, _, v, rank = _svd(x)
    top = min(d_max, size - 1, rank)
    high = knn(x, h).indices
    centered = x - mean
    dims = np.arange(1, top + 1)
    vals = np.empty(top)
    for d in dims:
        low = knn(centered @ v[:, :d], h).indices
        vals[d - 1] = jaccard_rows(high, low).mean()
    return dims, vals, rank


def ajd_sweep(cover: ClusterCover, data, h: int = DEFAULT_H, d_max: int | None = None) -> AjdSweep:
    """PC-versus-AJD curve for every expanded cluster.

    Neighbours are searched among the expanded cluster's own members only.
    Clusters with h or fewer points are skipped with a warning.
    """
    x = as_array(data)
    if len(cover.assignment) != x.shape[0]:
        raise ValueError("cover and data disagree on the number of points")
    d_max = x.shape[1] if d_max is None else d_max
    if not 1 <= d_max <= x.shape[1]:
        raise ValueError(f"d_max must be in [1, {x.shape[1]}], got {d_max}")
    sweep = AjdSweep(h=h, d_max=d_max)
    for c, mem in enumerate(cover.expanded_members):
        if len(mem) < h + 1:
            warnings.warn(f"cluster {c} has {len(mem)} points (< h + 1 = {h + 1}); skipped",
                          stacklevel=2)
            sweep.skipped.append(c)
            continue
        dims, vals, rank = cluster_ajd_curve(x[mem], h, d_max)
        sweep.ranks[c] = rank
        if len(dims) == 0:
            warnings.warn(f"cluster {c} has rank 0; skipped", stacklevel=2)
            sweep.skipped.append(c)
            continue
        sweep.curves[c] = (dims, vals)
    return sweep


@dataclass(frozen=True)
class DimensionVerdict:
    kind: str                     # "manifold" | "no-manifold" | "inconclusive"
    dimension: int | None
    crossings: dict               # cluster id -> first d with ajd <= tau (None if never)
    tau: float
    delta: int

    def __str__(self):
        if self.kind == "manifold":
            return f"manifold({self.dimension})"
        return self.kind


def estimate_dimension(sweep: AjdSweep, tau: float = DEFAULT_TAU,
                       delta: int = DEFAULT_DELTA) -> DimensionVerdict:
    """Read a manifold dimension off the per-cluster curves.

    Each cluster crosses at the smallest d with AJD <= tau. The data looks like
    a manifold of dimension max(crossings) when the crossings span at most
    delta; a wider spread means no consistent dimension. Any curve that never
    crosses, or an empty sweep, makes the verdict inconclusive.
    """
    crossings = {}
    for c, (dims, vals) in sorted(sweep.curves.items()):
        hit = np.flatnonzero(vals <= tau)
        crossings[c] = int(dims[hit[0]]) if hit.size else None
    if not crossings or any(v is None for v in crossings.values()):
        return DimensionVerdict("inconclusive", None, crossings, tau, delta)
    lo, hi = min(crossings.values()), max(crossings.values())
    if hi - lo <= delta:
        return DimensionVerdict("manifold", hi, crossings, tau, delta)
    return DimensionVerdict("no-manifold", None, crossings, tau, delta)
