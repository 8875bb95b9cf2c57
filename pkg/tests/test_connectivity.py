from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_atlas.clustering import expand_transitions, kmeans
from manifold_atlas.connectivity import (EpsilonCurve, UnionFind, classify_components, epsilon_curve,
                                         minimum_spanning_edges, transition_graph)
from manifold_atlas.dataset import gen_sphere_circle_union
from manifold_atlas.neighbors import knn


def bfs_components(x, eps):
    """Component sizes of the epsilon graph by breadth-first search over the full distance matrix."""
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    adj = d <= eps
    seen = np.zeros(len(x), bool)
    sizes = []
    for s in range(len(x)):
        if seen[s]:
            continue
        seen[s] = True
        queue, size = deque([s]), 0
        while queue:
            u = queue.popleft()
            size += 1
            for v in np.flatnonzero(adj[u] & ~seen):
                seen[v] = True
                queue.append(v)
        sizes.append(size)
    return sorted(sizes, reverse=True)


def test_union_find():
    uf = UnionFind(5)
    assert uf.union(0, 1) and uf.union(3, 4) and not uf.union(1, 0)
    assert uf.n_components == 3 and uf.top_sizes(3) == [2, 2, 1]
    uf.union(1, 4)
    assert uf.largest == 4 and uf.groups() == [[0, 1, 3, 4], [2]]


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 10_000))
def test_curve_matches_bfs(n, seed):
    x = np.random.default_rng(seed).uniform(size=(n, 2))
    curve = epsilon_curve(x, grid_size=7)
    for eps, gcc, second, ncomp in curve.rows():
        sizes = bfs_components(x, eps)
        assert gcc == sizes[0] / n
        assert second == (sizes[1] / n if len(sizes) > 1 else 0.0)
        assert ncomp == len(sizes)


def test_mst_total_length_matches_scipy(rng):
    from scipy.sparse.csgraph import minimum_spanning_tree
    from scipy.spatial.distance import squareform, pdist
    x = rng.normal(size=(60, 3))
    _, lengths = minimum_spanning_edges(x)
    assert lengths.sum() == pytest.approx(minimum_spanning_tree(squareform(pdist(x))).sum())
    assert np.all(np.diff(lengths) >= 0)


def test_curve_endpoints_and_monotone(rng):
    x = rng.normal(size=(200, 3))
    curve = epsilon_curve(x)
    assert len(curve.grid) == 100
    assert curve.gcc_fraction[-1] == 1.0 and curve.n_components[-1] == 1
    assert np.all(np.diff(curve.gcc_fraction) >= 0)
    assert np.all(np.diff(curve.n_components) <= 0)


def test_two_points():
    curve = epsilon_curve(np.array([[0.0], [2.0]]), grid_size=3)
    assert curve.gcc_fraction.tolist() == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        epsilon_curve(np.zeros((3, 2)))


def test_cube_is_single(rng):
    assert classify_components(epsilon_curve(rng.uniform(size=(800, 3)))).kind == "single"


def test_two_blobs_are_multiple(rng):
    x = np.vstack([rng.normal(size=(300, 2)), rng.normal(size=(300, 2)) + [40, 0]])
    verdict = classify_components(epsilon_curve(x))
    assert str(verdict) == "multiple(>=2)"


def test_classify_rule_on_synthetic_curve():
    grid = np.arange(5.0)
    curve = EpsilonCurve(grid, np.array([0.1, 0.3, 0.5, 0.5, 1.0]), np.array([0.1, 0.3, 0.5, 0.5, 0.0]),
                         np.array([9, 4, 2, 2, 1]), 100)
    assert classify_components(curve).jumps == (4,)
    # without a large runner-up the same step is ignored
    flat = EpsilonCurve(grid, curve.gcc_fraction, np.full(5, 0.05), curve.n_components, 100)
    assert classify_components(flat).kind == "single"


def test_transition_graph_sphere_circle():
    pc, _ = gen_sphere_circle_union(400, 400, seed=0)
    cover = expand_transitions(kmeans(pc.points, 6, seed=0), knn(pc.points, 10))
    graph = transition_graph(cover)
    assert graph.n_components == 2
    assert all(w > 0 for w in graph.edges.values())
