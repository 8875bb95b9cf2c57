import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_atlas.clustering import ClusterCover, assign_new_point, choose_k, expand_transitions, kmeans
from manifold_atlas.connectivity import transition_graph
from manifold_atlas.neighbors import knn


def collinear_cover():
    x = np.arange(10, dtype=float)[:, None]
    a = np.repeat([0, 1], 5)
    cover = ClusterCover(2, a, np.array([[2.0], [7.0]]), [np.arange(5), np.arange(5, 10)],
                         np.empty(0, dtype=np.int64))
    return x, cover


class TestKMeans:
    def test_single_cluster_is_mean(self, rng):
        x = rng.normal(size=(40, 3))
        cover = kmeans(x, 1)
        np.testing.assert_allclose(cover.centroids[0], x.mean(axis=0))
        assert np.all(cover.assignment == 0)

    def test_k_equals_n_zero_wcss(self, rng):
        x = rng.normal(size=(12, 2))
        cover = kmeans(x, 12)
        assert cover.wcss_history[-1] == pytest.approx(0.0, abs=1e-20)
        assert sorted(cover.raw_sizes().tolist()) == [1] * 12

    def test_two_separated_blobs(self, rng):
        x = np.vstack([rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + 100])
        a = kmeans(x, 2, seed=4).assignment
        assert len(set(a[:50])) == 1 and len(set(a[50:])) == 1 and a[0] != a[50]

    def test_deterministic_for_seed(self, rng):
        x = rng.normal(size=(200, 4))
        assert kmeans(x, 5, seed=9).assignment.tobytes() == kmeans(x, 5, seed=9).assignment.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(5, 120), k=st.integers(1, 8), seed=st.integers(0, 1000))
    def test_partition_wcss_monotone_and_nonempty(self, n, k, seed):
        k = min(k, n)
        x = np.random.default_rng(seed).normal(size=(n, 3))
        cover = kmeans(x, k, seed=seed)
        assert cover.raw_sizes().sum() == n and cover.raw_sizes().min() >= 1
        h = np.array(cover.wcss_history)
        assert np.all(h[1:] <= h[:-1] * (1 + 1e-12) + 1e-12)

    def test_handles_duplicates(self):
        x = np.vstack([np.zeros((10, 2)), np.ones((3, 2))])
        cover = kmeans(x, 3, seed=0)
        assert cover.raw_sizes().min() >= 1

    def test_bad_k(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 1)), 4)


class TestExpansion:
    def test_collinear_l4(self):
        x, cover = collinear_cover()
        exp = expand_transitions(cover, knn(x, 4))
        assert exp.transition_points.tolist() == [3, 4, 5, 6]
        assert exp.expanded_members[0].tolist() == list(range(7))
        assert exp.expanded_members[1].tolist() == list(range(3, 10))
        assert transition_graph(exp).weight(0, 1) == 4

    def test_collinear_l2(self):
        x, cover = collinear_cover()
        exp = expand_transitions(cover, knn(x, 2))
        assert exp.transition_points.tolist() == [4, 5]
        assert exp.adopted(0).tolist() == [5] and exp.adopted(1).tolist() == [4]
        assert transition_graph(exp).weight(0, 1) == 2

    def test_adoption_matches_brute_force(self, rng):
        x = rng.normal(size=(150, 3))
        cover = kmeans(x, 4, seed=1)
        nb = knn(x, 6).indices
        exp = expand_transitions(cover, knn(x, 6))
        a = cover.assignment
        for c in range(4):
            expected = set(np.flatnonzero(a == c).tolist())
            for p in np.flatnonzero(a == c):
                expected.update(int(j) for j in nb[p])
            assert set(exp.expanded_members[c].tolist()) == expected

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), k=st.integers(2, 6), l=st.integers(1, 10))
    def test_cover_invariants(self, seed, k, l):
        x = np.random.default_rng(seed).normal(size=(80, 2))
        cover = kmeans(x, k, seed=seed)
        exp = expand_transitions(cover, knn(x, l))
        counts = exp.membership_counts()
        assert counts.min() >= 1
        in_trans = np.zeros(80, dtype=bool)
        in_trans[exp.transition_points] = True
        # only transition points may sit in more than one cluster
        assert np.all(in_trans[counts >= 2])
        for c in range(k):
            assert set(cover.members(c)) <= set(exp.expanded_members[c])
            assert set(exp.adopted(c)) <= set(exp.transition_points)
        assert np.all(counts[np.concatenate([exp.adopted(c) for c in range(k)])] >= 2)

    def test_size_mismatch(self):
        x, cover = collinear_cover()
        with pytest.raises(ValueError, match="neighbour table"):
            expand_transitions(cover, knn(x[:8], 2))

    def test_report_rows(self):
        x, cover = collinear_cover()
        rows = expand_transitions(cover, knn(x, 4)).report_rows()
        assert rows[0] == {"cluster_id": 0, "raw_size": 5, "expanded_size": 7, "adopted": 2,
                           "own_transition_points": 2}


class TestAssign:
    def test_nearest_centroid(self):
        _, cover = collinear_cover()
        assert assign_new_point(cover, [3.0]) == 0
        assert assign_new_point(cover, [6.0]) == 1

    def test_tie_goes_to_lower_id(self):
        _, cover = collinear_cover()
        assert assign_new_point(cover, [4.5]) == 0

    def test_errors(self):
        _, cover = collinear_cover()
        with pytest.raises(ValueError):
            assign_new_point(cover, [1.0, 2.0])
        with pytest.raises(ValueError):
            assign_new_point(cover, [np.nan])


def test_choose_k_respects_minimum(rng):
    x = rng.normal(size=(600, 3))
    k, cover = choose_k(x)
    assert 1 <= k <= 10 and cover.raw_sizes().min() >= 50
    assert choose_k(rng.normal(size=(60, 2)))[0] == 1
