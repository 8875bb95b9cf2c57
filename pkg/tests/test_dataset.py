import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from manifold_atlas.dataset import (MatrixFormatError, PointCloud, cpm_normalize, gen_plane_union, gen_s_curve,
                                    gen_sphere_circle_union, gen_swiss_roll, load_matrix, log_transform,
                                    parse_preprocess, preprocess, s_curve_point, sample_hypersphere, save_matrix,
                                    select_hvg, swiss_roll_point)


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadMatrix:
    def test_plain_numeric(self, tmp_path):
        pc = load_matrix(write(tmp_path, "1,2\n3,4\n5,6"))
        assert pc.points.shape == (3, 2)
        np.testing.assert_array_equal(pc.points, [[1, 2], [3, 4], [5, 6]])

    def test_header_detected(self, tmp_path):
        pc = load_matrix(write(tmp_path, "a,b\n1,2\n3,4\n"))
        assert pc.n_points == 2
        assert pc.column_names == ["a", "b"]

    def test_tab_delimited(self, tmp_path):
        pc = load_matrix(write(tmp_path, "g1\tg2\tg3\n1\t2\t3\n", "m.tsv"))
        assert pc.column_names == ["g1", "g2", "g3"]
        np.testing.assert_array_equal(pc.points, [[1, 2, 3]])

    def test_nan_cell_named(self, tmp_path):
        with pytest.raises(MatrixFormatError, match=r"line 2, column 2"):
            load_matrix(write(tmp_path, "1,2\n3,NaN\n"))

    def test_unparseable_cell(self, tmp_path):
        with pytest.raises(MatrixFormatError, match=r"'x' at line 3, column 1"):
            load_matrix(write(tmp_path, "a,b\n1,2\nx,4\n"))

    def test_ragged_rows_rejected(self, tmp_path):
        with pytest.raises(MatrixFormatError, match="line 2 has 3 columns"):
            load_matrix(write(tmp_path, "1,2\n3,4,5\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            load_matrix(write(tmp_path, ""))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_save_load_roundtrip_is_bit_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    pc = PointCloud(values)
    save_matrix(pc, path)
    back = load_matrix(path)
    assert back.column_names == pc.column_names
    assert back.points.tobytes() == pc.points.tobytes()


def test_pointcloud_invariants():
    with pytest.raises(ValueError, match="non-finite"):
        PointCloud([[1.0, np.inf]])
    with pytest.raises(ValueError, match="unique"):
        PointCloud([[1.0, 2.0]], column_names=["a", "a"])
    with pytest.raises(ValueError):
        PointCloud(np.empty((0, 3)))


class TestSCurve:
    @pytest.mark.parametrize("t, height, expected", [
        (0.0, 1.0, (0.0, 1.0, 0.0)),
        (np.pi / 2, 0.0, (1.0, 0.0, -1.0)),
        (-np.pi / 2, 2.0, (-1.0, 2.0, 1.0)),
    ])
    def test_generator_formula(self, t, height, expected):
        np.testing.assert_allclose(s_curve_point(t, height), expected, atol=1e-15)

    def test_latent_aligned_and_in_range(self):
        cloud, latent = gen_s_curve(2000, seed=3)
        t, h = latent.points.T
        assert np.all(np.abs(t) <= 1.5 * np.pi) and np.all((h >= 0) & (h <= 2))
        direct = np.column_stack([np.sin(t), h, np.sign(t) * (np.cos(t) - 1)])
        assert np.max(np.abs(direct - cloud.points)) < 1e-12

    def test_deterministic(self):
        a, _ = gen_s_curve(100, seed=5)
        b, _ = gen_s_curve(100, seed=5)
        assert a.points.tobytes() == b.points.tobytes()


class TestSwissRoll:
    def test_formula(self):
        np.testing.assert_allclose(swiss_roll_point(2 * np.pi, 0.0), (2 * np.pi, 0.0, 0.0), atol=1e-12)

    def test_parameter_bounds(self):
        cloud, latent = gen_swiss_roll(3000, seed=1, return_latent=True)
        t, h = latent.points.T
        assert t.min() >= 1.5 * np.pi and t.max() <= 4.5 * np.pi
        assert h.min() >= 0 and h.max() <= 21
        np.testing.assert_allclose(cloud.points, swiss_roll_point(t, h))


class TestHypersphere:
    def test_unit_norm_and_zero_padding(self):
        pc = sample_hypersphere(9, 20, 5000, seed=0)
        assert pc.points.shape == (5000, 20)
        assert np.max(np.abs(np.linalg.norm(pc.points, axis=1) - 1)) < 1e-12
        assert np.all(pc.points[:, 10:] == 0.0)

    def test_mean_near_origin(self):
        pc = sample_hypersphere(9, 20, 5000, seed=1)
        assert np.all(np.abs(pc.points.mean(axis=0)) <= 5 / np.sqrt(5000))

    def test_octant_uniformity(self):
        n = 8000
        pc = sample_hypersphere(2, 3, n, seed=2)
        octant = (pc.points > 0) @ np.array([1, 2, 4])
        counts = np.bincount(octant, minlength=8)
        assert np.all(np.abs(counts - n / 8) <= 4 * np.sqrt(n))

    def test_ambient_too_small(self):
        with pytest.raises(ValueError):
            sample_hypersphere(3, 3, 10)


class TestSphereCircle:
    def test_components_disjoint(self):
        pc, labels = gen_sphere_circle_union(300, 200, offset=5.0, seed=0)
        sphere, circle = pc.points[labels == 0], pc.points[labels == 1]
        # brute-force minimum over all cross pairs
        d = np.sqrt(((sphere[:, None, :] - circle[None, :, :]) ** 2).sum(-1))
        assert d.min() >= 3.0
        assert np.all(circle[:, 2] == 0.0)
        np.testing.assert_allclose(np.linalg.norm(circle - [5, 0, 0], axis=1), 1.0)

    def test_offset_must_separate(self):
        with pytest.raises(ValueError):
            gen_sphere_circle_union(10, 10, offset=2.0)


def test_plane_union_ranks():
    pc, labels = gen_plane_union((3, 7), 200, 20, seed=0)
    for j, d in enumerate((3, 7)):
        block = pc.points[labels == j]
        assert np.linalg.matrix_rank(block - block.mean(0), tol=1e-8) == d


class TestPreprocessing:
    def test_cpm_arithmetic(self):
        out = cpm_normalize(PointCloud([[1.0, 1.0, 2.0]]))
        np.testing.assert_allclose(out.points, [[250000, 250000, 500000]])

    def test_cpm_constant_row(self):
        out = cpm_normalize(PointCloud([[3.0] * 8]))
        np.testing.assert_allclose(out.points, 1e6 / 8)

    def test_cpm_row_sums(self, rng):
        out = cpm_normalize(PointCloud(rng.poisson(3.0, (50, 30)) + 1.0))
        np.testing.assert_allclose(out.points.sum(axis=1), 1e6, rtol=1e-12)

    def test_cpm_zero_row(self):
        with pytest.raises(ValueError, match="'1'"):
            cpm_normalize(PointCloud([[1.0, 2.0], [0.0, 0.0]]))

    def test_hvg_keeps_highest_variance(self):
        # column variances 0, 1, 4
        x = np.column_stack([np.full(4, 7.0), [0, 2, 0, 2], [0, 4, 0, 4]]).astype(float)
        pc = PointCloud(x, ["c0", "c1", "c2"])
        assert np.allclose(pc.points.var(axis=0), [0, 1, 4])
        assert select_hvg(pc, 2).column_names == ["c1", "c2"]

    def test_hvg_identity_and_ties(self, rng):
        pc = PointCloud(rng.normal(size=(20, 5)))
        assert select_hvg(pc, 5).points.tobytes() == pc.points.tobytes()
        tied = PointCloud(np.column_stack([[0, 1, 0, 1]] * 3).astype(float), ["a", "b", "c"])
        assert select_hvg(tied, 2).column_names == ["a", "b"]

    def test_hvg_never_picks_constant(self, rng):
        x = rng.normal(size=(30, 6))
        x[:, 2] = 1.0
        assert "x2" not in select_hvg(PointCloud(x), 5).column_names

    def test_log_transform(self):
        out = log_transform(PointCloud([[0.0, np.e - 1, 5.0, 6.0]]))
        np.testing.assert_allclose(out.points[0, :2], [0.0, 1.0], atol=1e-15)
        assert out.points[0, 2] < out.points[0, 3]
        with pytest.raises(ValueError):
            log_transform(PointCloud([[-1.0]]))

    def test_ladder_order(self, rng):
        counts = PointCloud(rng.poisson(2.0, (40, 12)) + 1.0)
        stages = parse_preprocess("hvg:5,cpm,log")
        assert stages == [("hvg", 5), ("cpm", None), ("log", None)]
        expected = log_transform(cpm_normalize(select_hvg(counts, 5)))
        np.testing.assert_array_equal(preprocess(counts, "hvg:5,cpm,log").points, expected.points)
        with pytest.raises(ValueError):
            parse_preprocess("zscore")
