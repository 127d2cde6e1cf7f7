import numpy as np
import pytest

from symscan.errors import DegenerateInput, EmptyCloud
from symscan.icp import (ConvergenceTable, IcpConfig, chamfer, convergence_study,
                         distance_matrix, icp_distance, icp_register, pair_seed,
                         random_rotation)
from symscan.synthetic import box_cloud, random_ellipsoid, sphere_cloud


def chamfer_oracle(a, b):
    """Direct evaluation of the two-sided mean squared NN distance."""
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


def asymmetric_cloud(n, seed):
    """Anisotropically scaled blob: no nontrivial self-symmetry."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3)) * np.array([2.5, 0.9, 0.4])
    pts[:, 0] += 0.3 * pts[:, 1] ** 2 / (1 + np.abs(pts[:, 1]))
    return pts


class TestChamfer:
    def test_self_zero(self):
        a = np.random.default_rng(0).normal(size=(100, 3))
        assert chamfer(a, a) == 0.0

    def test_single_pair(self):
        assert chamfer(np.zeros((1, 3)), np.array([[1.0, 0, 0]])) == 2.0

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = rng.normal(size=(64, 3))
            b = rng.normal(size=(64, 3))
            got = chamfer(a, b)
            want = chamfer_oracle(a, b)
            assert abs(got - want) <= 1e-12 * max(abs(want), 1.0)

    def test_large_inputs_use_tree_path(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3000, 3))
        b = rng.normal(size=(3000, 3))
        got = chamfer(a, b)
        want = chamfer_oracle(a, b)
        assert abs(got - want) <= 1e-9 * want

    def test_empty(self):
        with pytest.raises(EmptyCloud):
            chamfer(np.zeros((0, 3)), np.zeros((4, 3)))


class TestRegister:
    def test_recovers_small_rotation(self):
        a = asymmetric_cloud(400, seed=3)
        angle = np.deg2rad(10)
        rot = np.array([[np.cos(angle), -np.sin(angle), 0],
                        [np.sin(angle), np.cos(angle), 0], [0, 0, 1.0]])
        b = a @ rot.T + np.array([0.1, -0.2, 0.05])
        tf, ch, _ = icp_register(a, b)
        assert ch <= 1e-10
        assert np.allclose(tf.apply(a), b, atol=1e-5)

    def test_identity_one_iteration(self):
        a = asymmetric_cloud(200, seed=4)
        tf, ch, iters = icp_register(a, a)
        assert iters == 1
        assert ch <= 1e-20
        assert np.allclose(tf.rotation, np.eye(3), atol=1e-9)

    def test_opposite_rotation_local_minimum(self):
        a = asymmetric_cloud(300, seed=5)
        rot = np.diag([-1.0, -1.0, 1.0])  # 180 degrees about z
        b = a @ rot.T
        tf, ch, _ = icp_register(a, b)
        assert ch >= 0.0  # converges without error; a local minimum is fine

    def test_rotation_is_orthogonal(self):
        a = asymmetric_cloud(300, seed=6)
        rng = np.random.default_rng(7)
        b = a @ random_rotation(rng).T + rng.normal(size=3)
        tf, _, _ = icp_register(a, b)
        r = tf.rotation
        assert np.abs(r @ r.T - np.eye(3)).max() < 1e-6
        assert abs(np.linalg.det(r) - 1.0) < 1e-6

    def test_collinear_rejected(self):
        line = np.zeros((10, 3))
        line[:, 0] = np.arange(10)
        good = asymmetric_cloud(10, seed=8)
        with pytest.raises(DegenerateInput):
            icp_register(line, good)
        with pytest.raises(DegenerateInput):
            icp_register(good, line)
        with pytest.raises(DegenerateInput):
            icp_register(good[:2], good)


class TestIcpDistance:
    def test_rigid_copy(self):
        a = asymmetric_cloud(512, seed=9)
        rng = np.random.default_rng(10)
        b = a @ random_rotation(rng).T + np.array([0.3, -0.2, 0.9])
        assert icp_distance(a, b, IcpConfig(seed=11)) <= 1e-3

    def test_mirror_copy(self):
        a = asymmetric_cloud(512, seed=12)
        m = a.copy()
        m[:, 1] = -m[:, 1]
        assert icp_distance(a, m, IcpConfig(seed=13)) <= 1e-3

    def test_sphere_vs_cube_far_apart(self):
        sphere = sphere_cloud(512, 1.0, seed=14)
        cube = box_cloud(512, 2.0, 2.0, 2.0, seed=15)
        d = icp_distance(sphere, cube, IcpConfig(seed=16))
        assert d > 0.005

    def test_downsamples_large_clouds(self):
        # different FPS subsets of the same surface leave only sampling noise
        a = random_ellipsoid(3000, seed=17)
        rng = np.random.default_rng(18)
        b = a @ random_rotation(rng).T
        assert icp_distance(a, b, IcpConfig(seed=19, restarts=10)) <= 0.02


class TestDistanceMatrix:
    def test_identical_items(self):
        a = asymmetric_cloud(256, seed=20)
        m = distance_matrix([a, a.copy()], IcpConfig(seed=21))
        assert m.values[0, 1] <= 1e-3
        assert m.values[0, 0] == 0.0

    def test_parallelism_bit_identical(self):
        rng = np.random.default_rng(22)
        items = [rng.normal(size=(128, 3)) for _ in range(6)]
        m1 = distance_matrix(items, IcpConfig(seed=23), parallelism=1)
        m8 = distance_matrix(items, IcpConfig(seed=23), parallelism=8)
        assert np.array_equal(m1.values, m8.values)

    def test_matches_sequential_oracle(self):
        rng = np.random.default_rng(24)
        items = [rng.normal(size=(100, 3)) for _ in range(5)]
        cfg = IcpConfig(seed=25)
        m = distance_matrix(items, cfg, parallelism=2)
        for i in range(5):
            for j in range(i + 1, 5):
                want = icp_distance(items[i], items[j],
                                    IcpConfig(seed=pair_seed(25, i, j)))
                assert m.values[i, j] == want

    def test_failed_pair_is_inf(self):
        line = np.zeros((10, 3))
        line[:, 0] = np.arange(10)
        good = asymmetric_cloud(64, seed=26)
        m = distance_matrix([line, good], IcpConfig(seed=27))
        assert np.isinf(m.values[0, 1])
        assert len(m.failures) == 1

    def test_symmetric_and_nonnegative(self):
        rng = np.random.default_rng(28)
        items = [rng.normal(size=(80, 3)) for _ in range(4)]
        m = distance_matrix(items, IcpConfig(seed=29))
        assert np.abs(m.values - m.values.T).max() <= 1e-9
        assert (m.values >= 0).all()
        assert np.all(np.diag(m.values) == 0)


class TestConvergence:
    def test_monotone_and_std_zero(self):
        items = [random_ellipsoid(256, seed=s) for s in range(3)]
        table = convergence_study(items, trials=1, max_n=8, cfg=IcpConfig(seed=30))
        assert np.all(np.diff(table.mean) <= 1e-15)
        assert np.allclose(table.std, 0.0)

    def test_improves_with_restarts(self):
        items = [random_ellipsoid(256, seed=40 + s) for s in range(5)]
        table = convergence_study(items, trials=2, max_n=12, cfg=IcpConfig(seed=31))
        assert table.mean[-1] <= table.mean[0]

    def test_csv(self, tmp_path):
        items = [random_ellipsoid(128, seed=50)]
        table = convergence_study(items, trials=1, max_n=3, cfg=IcpConfig(seed=32))
        path = tmp_path / "c.csv"
        table.to_csv(str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "restarts,mean,std"
        assert len(lines) == 4
