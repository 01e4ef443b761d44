import math

import numpy as np
import pytest

from tokmesh.metrics import SimilarityTransform, accel_error, mpjpe, pa_mpjpe, procrustes_align, pve


def rz(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rand_joints(t, j=24, seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(0, scale, (t, j, 3))


class TestProcrustes:
    def test_identity_on_equal_sets(self):
        p = rand_joints(1, seed=1)[0]
        tf = procrustes_align(p, p)
        assert tf.scale == pytest.approx(1.0, abs=1e-9)
        assert np.abs(tf.rot - np.eye(3)).max() < 1e-9
        assert np.abs(tf.trans).max() < 1e-9

    def test_recovers_constructed_transform(self):
        p = rand_joints(1, seed=2)[0]
        rot = rz(math.pi / 2)
        q = 2.0 * p @ rot.T + np.array([1.0, 2.0, 3.0])
        tf = procrustes_align(p, q)
        assert tf.scale == pytest.approx(2.0, abs=1e-6)
        assert np.abs(tf.rot - rot).max() < 1e-6
        assert np.abs(tf.trans - np.array([1.0, 2.0, 3.0])).max() < 1e-6
        assert np.abs(tf.apply(p) - q).max() < 1e-6

    def test_no_reflections(self):
        p = rand_joints(1, seed=3)[0]
        q = p.copy()
        q[:, 0] *= -1.0
        tf = procrustes_align(p, q)
        assert np.linalg.det(tf.rot) == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_points_rejected(self):
        p = np.ones((10, 3))
        with pytest.raises(ValueError):
            procrustes_align(p, rand_joints(1, seed=4, j=10)[0])

    def test_residual_never_worse_than_unaligned(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            p = rng.normal(size=(24, 3))
            q = rng.normal(size=(24, 3))
            aligned = procrustes_align(p, q).apply(p)
            assert ((aligned - q) ** 2).sum() <= ((p - q) ** 2).sum() + 1e-12


class TestMpjpe:
    def test_exact_is_zero(self):
        j = rand_joints(4, seed=5)
        assert mpjpe(j, j) == pytest.approx(0.0, abs=1e-12)

    def test_constant_offset_cancels(self):
        gt = rand_joints(4, seed=6)
        assert mpjpe(gt + np.array([0.5, -1.0, 2.0]), gt) == pytest.approx(0.0, abs=1e-12)

    def test_single_joint_off(self):
        gt = rand_joints(1, seed=7)
        pred = gt.copy()
        pred[0, 5] += np.array([3.0, 4.0, 0.0])
        assert mpjpe(pred, gt) == pytest.approx(5.0 / 24.0, rel=1e-12)

    def test_not_rotation_invariant(self):
        gt = rand_joints(1, seed=8)
        rotated = gt @ rz(0.7).T
        assert mpjpe(rotated, gt) > 1e-3

    def test_not_scale_invariant(self):
        gt = rand_joints(1, seed=9)
        assert mpjpe(gt * 1.5, gt) > 1e-3


class TestPaMpjpe:
    def test_exact_is_zero(self):
        j = rand_joints(3, seed=10)
        assert pa_mpjpe(j, j) == pytest.approx(0.0, abs=1e-9)

    def test_similarity_transform_invariance(self):
        gt = rand_joints(5, seed=11)
        pred = np.stack([
            (1.0 + 0.2 * t) * frame @ rz(0.3 * t).T + np.array([t, -t, 0.5])
            for t, frame in enumerate(gt)
        ])
        assert pa_mpjpe(pred, gt) == pytest.approx(0.0, abs=1e-6)

    def test_never_exceeds_mpjpe_on_random_cases(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            gt = rng.normal(size=(1, 24, 3))
            pred = gt + rng.normal(0, 0.3, size=gt.shape)
            assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-12


class TestPve:
    def test_exact_is_zero(self):
        v = np.random.default_rng(12).normal(size=(2, 50, 3))
        root = np.zeros(50)
        root[0] = 1.0
        assert pve(v, v, root) == pytest.approx(0.0, abs=1e-12)

    def test_constant_offset_cancels(self):
        v = np.random.default_rng(13).normal(size=(2, 50, 3))
        root = np.zeros(50)
        root[0] = 1.0
        assert pve(v + np.array([1.0, 2.0, -0.5]), v, root) == pytest.approx(0.0, abs=1e-12)

    def test_single_vertex_off(self):
        v = np.random.default_rng(14).normal(size=(1, 50, 3))
        pred = v.copy()
        pred[0, 5] += np.array([0.0, 2.0, 0.0])
        root = np.zeros(50)
        root[0] = 1.0  # root unaffected by the perturbed vertex
        assert pve(pred, v, root) == pytest.approx(2.0 / 50.0, rel=1e-12)


class TestAccelError:
    def test_exact_is_zero(self):
        j = rand_joints(6, seed=15)
        assert accel_error(j, j) == 0.0

    def test_linear_drift_cancels(self):
        gt = rand_joints(6, seed=16)
        drift = np.arange(6)[:, None, None] * np.array([0.2, 0.0, -0.1]) + np.array([1.0, 1.0, 1.0])
        assert accel_error(gt + drift, gt) == pytest.approx(0.0, abs=1e-9)

    def test_alternating_offset_closed_form(self):
        gt = rand_joints(8, seed=17)
        delta = 0.05
        pred = gt.copy()
        pred[:, 3, 0] += delta * (-1.0) ** np.arange(8)
        # second difference of (-1)^t * delta has magnitude 4*delta on one joint
        assert accel_error(pred, gt) == pytest.approx(4.0 * delta / 24.0, rel=1e-12)

    def test_needs_three_frames(self):
        j = rand_joints(2, seed=18)
        with pytest.raises(ValueError):
            accel_error(j, j)


def test_similarity_transform_apply_matches_definition():
    rng = np.random.default_rng(19)
    pts = rng.normal(size=(7, 3))
    tf = SimilarityTransform(scale=1.7, rot=rz(0.4), trans=np.array([0.1, 0.2, 0.3]))
    expected = np.stack([1.7 * rz(0.4) @ p + np.array([0.1, 0.2, 0.3]) for p in pts])
    assert np.abs(tf.apply(pts) - expected).max() < 1e-12
