"""k-means local neighbourhoods and their overlap through transition points."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import as_array
from .neighbors import NeighborTable


@dataclass(frozen=True)
class ClusterCover:
    """A k-means partition, optionally expanded so neighbouring clusters overlap.

    ``expanded_members[c]`` holds the sorted indices of cluster c's own points
    plus any points it adopted. ``transition_points`` holds every point that
    takes part in a cross-cluster l-NN relation, from either end. Before
    expansion ``l`` is None, ``expanded_members`` equals the raw partition and
    ``transition_points`` is empty.
    """

    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    expanded_members: list = field(repr=False)
    transition_points: np.ndarray = field(repr=False)
    l: int | None = None
    wcss_history: tuple = field(default=(), repr=False)

    @property
    def n_points(self) -> int:
        return len(self.assignment)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == c)

    def raw_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def expanded_sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.expanded_members])

    def adopted(self, c: int) -> np.ndarray:
        """Points in expanded cluster c that k-means assigned elsewhere."""
        mem = self.expanded_members[c]
        return mem[self.assignment[mem] != c]

    def membership_counts(self) -> np.ndarray:
        """Number of expanded clusters each point belongs to."""
        counts = np.zeros(self.n_points, dtype=int)
        for mem in self.expanded_members:
            counts[mem] += 1
        return counts

    def report_rows(self) -> list[dict]:
        """Per-cluster sizes and transition counts, one dict per cluster."""
        raw = self.raw_sizes()
        in_transition = np.zeros(self.n_points, dtype=bool)
        in_transition[self.transition_points] = True
        rows = []
        for c in range(self.k):
            rows.append({
                "cluster_id": c,
                "raw_size": int(raw[c]),
                "expanded_size": len(self.expanded_members[c]),
                "adopted": len(self.adopted(c)),
                "own_transition_points": int(in_transition[self.members(c)].sum()),
            })
        return rows


def _wcss(x, assignment, centroids) -> float:
    diff = x - centroids[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def _farthest_point_seeds(x, k, rng) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    mind = cdist(x, x[chosen[0]][None, :], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        nxt = int(np.argmax(mind))  # ties -> lowest index
        chosen.append(nxt)
        np.minimum(mind, cdist(x, x[nxt][None, :], "sqeuclidean")[:, 0], out=mind)
    return x[chosen].copy()


def kmeans(data, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-10) -> ClusterCover:
    """Lloyd's algorithm from farthest-point seeds.

    Iteration stops once no centroid moves by more than ``tol`` or after
    ``max_iters`` rounds. A cluster that empties is reseeded with the point
    lying farthest from its own centroid. The within-cluster sum of squares
    after every round is kept in ``wcss_history`` and must never increase.
    """
    x = as_array(data)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _farthest_point_seeds(x, k, rng)
    history = []
    assignment = None
    for _ in range(max_iters):
        d2 = cdist(x, centroids, "sqeuclidean")
        assignment = np.argmin(d2, axis=1)
        counts = np.bincount(assignment, minlength=k)
        for c in np.flatnonzero(counts == 0):
            own = d2[np.arange(n), assignment].copy()
            own[counts[assignment] <= 1] = -1.0  # never empty another cluster
            p = int(np.argmax(own))
            counts[assignment[p]] -= 1
            assignment[p] = c
            counts[c] = 1
            centroids[c] = x[p]
            d2[p, c] = 0.0
        new = np.zeros_like(centroids)
        np.add.at(new, assignment, x)
        new /= counts[:, None]
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        history.append(_wcss(x, assignment, centroids))
        if len(history) > 1:
            assert history[-1] <= history[-2] * (1 + 1e-12) + 1e-12, "WCSS increased"
        if shift <= tol:
            break

    members = [np.flatnonzero(assignment == c) for c in range(k)]
    return ClusterCover(
        k=k,
        assignment=assignment,
        centroids=centroids,
        expanded_members=members,
        transition_points=np.empty(0, dtype=np.int64),
        l=None,
        wcss_history=tuple(history),
    )


def expand_transitions(cover: ClusterCover, nbrs: NeighborTable) -> ClusterCover:
    """Add to each cluster every outside point that is one of the l nearest
    neighbours of one of its own points (l = ``nbrs.q``)."""
    if nbrs.n_points != cover.n_points:
        raise ValueError(
            f"neighbour table has {nbrs.n_points} rows but the cover has {cover.n_points} points"
        )
    a = cover.assignment
    nb = nbrs.indices
    cross = a[nb] != a[:, None]
    src = np.broadcast_to(np.arange(len(a))[:, None], nb.shape)[cross]
    dst = nb[cross]

    expanded = []
    for c in range(cover.k):
        adopted = dst[a[src] == c]
        expanded.append(np.union1d(np.flatnonzero(a == c), adopted))
    transition = np.union1d(src, dst)
    return dataclasses.replace(cover, expanded_members=expanded, transition_points=transition,
                               l=nbrs.q)


def assign_new_point(cover: ClusterCover, x) -> int:
    """Index of the nearest centroid (ties -> lower id)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != cover.centroids.shape[1]:
        raise ValueError(f"point has {x.shape[0]} coordinates, centroids have {cover.centroids.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    d = np.linalg.norm(cover.centroids - x, axis=1)
    return int(np.argmin(d))


def choose_k(data, min_size: int = 50, k_start: int = 10, seed: int = 0) -> tuple[int, ClusterCover]:
    """Largest k <= k_start whose k-means partition has no cluster below min_size.

    Falls back to k = 1 when no larger k qualifies.
    """
    x = as_array(data)
    k = max(1, min(k_start, x.shape[0] // min_size))
    while True:
        cover = kmeans(x, k, seed=seed)
        if k == 1 or cover.raw_sizes().min() >= min_size:
            return k, cover
        k -= 1
