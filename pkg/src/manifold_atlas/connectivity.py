"""Connectivity diagnostics: cluster transition graphs and epsilon-network
giant-component curves."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterCover
from .dataset import as_array
from .neighbors import pairwise_extremes

DEFAULT_GRID_SIZE = 100
DEFAULT_JUMP = 0.2


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.n_components = n
        self.largest = 1 if n else 0
        self._root_sizes = {i: 1 for i in range(n)}

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        del self._root_sizes[rb]
        self._root_sizes[ra] = self.size[ra]
        self.largest = max(self.largest, self.size[ra])
        self.n_components -= 1
        return True

    def top_sizes(self, count: int = 2) -> list[int]:
        """Sizes of the ``count`` largest components, padded with zeros."""
        top = heapq.nlargest(count, self._root_sizes.values())
        return top + [0] * (count - len(top))

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return sorted(out.values(), key=lambda g: g[0])


# ---------------------------------------------------------------------------
# transition graph


@dataclass(frozen=True)
class TransitionGraph:
    nodes: list            # cluster ids
    node_sizes: dict       # cluster id -> (raw size, expanded size)
    edges: dict            # (i, j) with i < j -> weight
    components: list       # lists of cluster ids

    def weight(self, i: int, j: int) -> int:
        return self.edges.get((min(i, j), max(i, j)), 0)

    @property
    def n_components(self) -> int:
        return len(self.components)


def transition_graph(cover: ClusterCover) -> TransitionGraph:
    """Clusters as nodes; edge (i, j) weighs the points of i adopted into j plus
    the points of j adopted into i."""
    counts: dict[tuple[int, int], int] = {}
    for j in range(cover.k):
        adopted = cover.adopted(j)
        if adopted.size == 0:
            continue
        src, n = np.unique(cover.assignment[adopted], return_counts=True)
        for i, w in zip(src.tolist(), n.tolist()):
            key = (min(i, j), max(i, j))
            counts[key] = counts.get(key, 0) + w
    uf = UnionFind(cover.k)
    for i, j in counts:
        uf.union(i, j)
    raw = cover.raw_sizes()
    sizes = {c: (int(raw[c]), len(cover.expanded_members[c])) for c in range(cover.k)}
    return TransitionGraph(list(range(cover.k)), sizes, dict(sorted(counts.items())), uf.groups())


# ---------------------------------------------------------------------------
# epsilon networks


def minimum_spanning_edges(data) -> tuple[np.ndarray, np.ndarray]:
    """Prim's algorithm on the complete Euclidean graph.

    Returns (edges (N-1, 2), lengths) in ascending length order. Components of
    the threshold graph at any epsilon equal those of the MST edges <= epsilon.
    """
    x = as_array(data)
    n = x.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    in_tree[0] = True
    cur = 0
    edges = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    lengths = np.empty(max(n - 1, 0))
    for step in range(n - 1):
        d = np.sqrt(np.sum((x - x[cur]) ** 2, axis=1))
        closer = (d < best) & ~in_tree
        best[closer] = d[closer]
        parent[closer] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges[step] = (parent[nxt], nxt)
        lengths[step] = best[nxt]
        in_tree[nxt] = True
        cur = nxt
    order = np.argsort(lengths, kind="stable")
    return edges[order], lengths[order]


@dataclass(frozen=True)
class EpsilonCurve:
    grid: np.ndarray
    gcc_fraction: np.ndarray
    second_fraction: np.ndarray  # runner-up component size / N
    n_components: np.ndarray
    n_points: int

    def rows(self):
        for e, g, s, c in zip(self.grid, self.gcc_fraction, self.second_fraction, self.n_components):
            yield float(e), float(g), float(s), int(c)


def epsilon_curve(data, grid_size: int = DEFAULT_GRID_SIZE, grid=None) -> EpsilonCurve:
    """Giant-component fraction of the epsilon network along an epsilon grid.

    The default grid runs linearly from the smallest non-zero to the largest
    pairwise distance. Components are tracked with union-find while edges are
    added in increasing length.
    """
    x = as_array(data)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    if grid is None:
        if grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        lo, hi = pairwise_extremes(x)
        if not np.isfinite(lo):
            raise ValueError("all points coincide; no non-zero distance to build a grid from")
        grid = np.linspace(lo, hi, grid_size)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("epsilon grid must be ascending")

    edges, lengths = minimum_spanning_edges(x)
    uf = UnionFind(n)
    gcc = np.empty(len(grid))
    second = np.empty(len(grid))
    ncomp = np.empty(len(grid), dtype=np.int64)
    e = 0
    for g, eps in enumerate(grid):
        while e < len(lengths) and lengths[e] <= eps:
            uf.union(int(edges[e, 0]), int(edges[e, 1]))
            e += 1
        first, runner_up = uf.top_sizes(2)
        gcc[g] = first / n
        second[g] = runner_up / n
        ncomp[g] = uf.n_components
    assert np.all(np.diff(gcc) >= 0), "giant component shrank"
    return EpsilonCurve(grid, gcc, second, ncomp, n)


@dataclass(frozen=True)
class ComponentVerdict:
    kind: str                # "single" | "multiple"
    count_lower_bound: int
    jumps: tuple             # grid indices where a jump was detected

    def __str__(self):
        return "single" if self.kind == "single" else f"multiple(>={self.count_lower_bound})"


def classify_components(curve: EpsilonCurve, jump_threshold: float = DEFAULT_JUMP,
                        floor: float = 0.2) -> ComponentVerdict:
    """Flag a late step in the giant-component curve.

    Once the curve is above ``floor``, a single grid step that raises the
    fraction by more than ``jump_threshold`` means a separate large component
    has just merged in. The step only counts when a runner-up component larger
    than ``jump_threshold`` already existed before it: the percolation burst of
    one uniform blob also produces big steps, but fuses many small fragments.
    """
    g = curve.gcc_fraction
    s = curve.second_fraction
    jumps = tuple(int(i) for i in range(1, len(g))
                  if g[i - 1] > floor and g[i] - g[i - 1] > jump_threshold
                  and s[i - 1] > jump_threshold)
    if jumps:
        return ComponentVerdict("multiple", 1 + len(jumps), jumps)
    return ComponentVerdict("single", 1, ())
