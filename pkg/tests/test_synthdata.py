import math

import numpy as np
import pytest
import torch

from tokmesh import body_model as bm
from tokmesh.body_model import CameraParams, build_mini_model
from tokmesh.metrics import accel_error
from tokmesh.synthdata import (
    MotionSpec,
    RenderParams,
    dataset_from_archive,
    dataset_to_archive,
    jitter_joints,
    make_dataset,
    render,
    render_frame,
    sample_motion,
)


@pytest.fixture(scope="module")
def body():
    return build_mini_model(seed=0, num_vertices=200)


def still_motion(**overrides):
    base = dict(
        axes=np.tile(np.array([1.0, 0.0, 0.0]), (24, 1)),
        amplitude=np.zeros(24),
        frequency=np.full(24, 1.0 / 16.0),
        phase=np.zeros(24),
        drift_axis=np.array([0.0, 1.0, 0.0]),
        drift_rate=0.0,
        cam_s0=0.7,
        cam_s_amp=0.0,
        cam_s_freq=1.0 / 32.0,
        cam_s_phase=0.0,
        cam_t0=np.zeros(2),
        cam_t_amp=np.zeros(2),
        cam_t_freq=np.full(2, 1.0 / 32.0),
        cam_t_phase=np.zeros(2),
    )
    base.update(overrides)
    return MotionSpec(**base)


class TestMotion:
    def test_zero_amplitude_is_constant_rest_pose(self):
        spec = still_motion()
        theta, _ = spec.trajectory(10)
        assert float(theta.abs().max()) == 0.0

    def test_same_seed_identical(self):
        _, theta1, cam1 = sample_motion(seed=5, num_frames=12)
        _, theta2, cam2 = sample_motion(seed=5, num_frames=12)
        assert torch.equal(theta1, theta2)
        assert torch.equal(cam1.s, cam2.s)

    def test_periodicity(self):
        rng = np.random.default_rng(3)
        axes = rng.normal(size=(24, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        spec = still_motion(axes=axes, amplitude=rng.uniform(0.2, 1.0, 24),
                            phase=rng.uniform(0, 2 * math.pi, 24))
        period = 16  # frequency is 1/16 cycles per frame
        assert np.abs(spec.pose_at(0) - spec.pose_at(period)).max() < 1e-9

    def test_amplitudes_respect_limit(self):
        for seed in range(5):
            spec, _, _ = sample_motion(seed=seed, num_frames=2, max_amplitude=math.pi / 3)
            assert spec.amplitude.max() <= math.pi / 3


class TestRender:
    def test_values_in_unit_interval(self, body):
        _, theta, cam = sample_motion(seed=1, num_frames=1)
        img = render(body, theta[0], torch.zeros(10, dtype=torch.float64),
                     CameraParams(s=cam.s[0], t=cam.t[0]))
        assert img.shape == (3, 64, 64)
        assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0

    def test_single_joint_peak_at_rounded_pixel(self):
        j2d = torch.full((24, 2), 50.0, dtype=torch.float64)  # everyone far off frame
        j2d[7] = torch.tensor([0.1, -0.2], dtype=torch.float64)
        img = render_frame(j2d, torch.full((1, 2), 50.0, dtype=torch.float64), [], 64, 64, RenderParams())
        flat = int(img[0].argmax())
        row, col = divmod(flat, 64)
        px = (0.1 + 1.0) * 32.0 - 0.5   # 34.7 -> 35
        py = (1.0 + 0.2) * 32.0 - 0.5   # 37.9 -> 38
        assert (row, col) == (round(py), round(px))

    def test_translation_shifts_raster(self, body):
        _, theta, cam = sample_motion(seed=2, num_frames=1)
        beta = torch.zeros(10, dtype=torch.float64)
        cam0 = CameraParams(s=cam.s[0], t=cam.t[0])
        shift = 2.0 * 8.0 / 64.0  # one 8px patch in normalized units
        cam1 = CameraParams(s=cam.s[0], t=cam.t[0] + torch.tensor([shift, 0.0], dtype=torch.float64))
        img0 = render(body, theta[0], beta, cam0)
        img1 = render(body, theta[0], beta, cam1)
        assert torch.allclose(img1[:, :, 8:], img0[:, :, :-8], atol=1e-12)


class TestMakeDataset:
    def test_dropout_zero_keeps_all_flags(self, body):
        data = make_dataset(body, seed=1, num_sequences=4, clip_len=2)
        assert all(s.has_theta and s.has_beta and s.has_j3d and s.has_j2d for s in data)

    def test_dropout_one_keeps_only_2d(self, body):
        data = make_dataset(body, seed=1, num_sequences=4, clip_len=2, dropout=1.0)
        assert all(not s.has_theta and not s.has_beta and not s.has_j3d and s.has_j2d for s in data)

    def test_deterministic_per_seed(self, body):
        a = make_dataset(body, seed=9, num_sequences=2, clip_len=3)
        b = make_dataset(body, seed=9, num_sequences=2, clip_len=3)
        assert torch.equal(a[0].images, b[0].images)
        assert torch.equal(a[1].j2d, b[1].j2d)
        c = make_dataset(body, seed=10, num_sequences=2, clip_len=3)
        assert not torch.equal(a[0].images, c[0].images)

    def test_ground_truth_self_consistency(self, body):
        data = make_dataset(body, seed=4, num_sequences=2, clip_len=3)
        for seq in data:
            mesh = bm.forward(body, seq.theta, seq.beta)
            j3d = bm.regress_joints(body, mesh.vertices)
            j2d = bm.project(j3d, CameraParams(s=seq.cam_s, t=seq.cam_t))
            assert float((j3d - seq.j3d).abs().max()) < 1e-9
            assert float((j2d - seq.j2d).abs().max()) < 1e-9

    def test_archive_round_trip(self, body, tmp_path):
        data = make_dataset(body, seed=4, num_sequences=2, clip_len=3, dropout=1.0)
        path = tmp_path / "data.naa"
        dataset_to_archive(data, path)
        back = dataset_from_archive(path)
        assert len(back) == 2
        assert torch.equal(back[0].images, data[0].images)
        assert torch.equal(back[1].theta, data[1].theta)
        assert back[0].has_theta == data[0].has_theta


class TestJitter:
    def test_zero_sigma_is_identity(self):
        j = torch.randn(5, 24, 3, dtype=torch.float64)
        assert torch.equal(jitter_joints(j, 0.0, seed=1), j)

    def test_jitter_produces_nonzero_accel_error(self, body):
        data = make_dataset(body, seed=2, num_sequences=1, clip_len=6)
        clean = data[0].j3d
        noisy = jitter_joints(clean, 0.05, seed=3)
        assert accel_error(noisy.numpy(), clean.numpy()) > 0.0

    def test_empirical_std_matches_sigma(self):
        sigma = 0.07
        noise = jitter_joints(torch.zeros(10_000, 3, dtype=torch.float64), sigma, seed=5)
        assert abs(float(noise.std()) - sigma) / sigma < 0.1

    def test_deterministic(self):
        j = torch.randn(4, 24, 3, dtype=torch.float64)
        assert torch.equal(jitter_joints(j, 0.1, seed=8), jitter_joints(j, 0.1, seed=8))


def test_nearest_neighbor_learnability(body):
    """Rendered images must carry pose information: 1-NN in pixel space beats
    predicting the 2D joints of a random other sample."""
    data = make_dataset(body, seed=6, num_sequences=16, clip_len=4)
    images = torch.cat([s.images for s in data]).reshape(64, -1).numpy()
    j2d = torch.cat([s.j2d for s in data]).numpy()
    dists = np.linalg.norm(images[:, None, :] - images[None, :, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    nn = dists.argmin(axis=1)
    nn_err = np.linalg.norm(j2d[nn] - j2d, axis=-1).mean()
    rng = np.random.default_rng(0)
    rand_idx = rng.permutation(64)
    rand_err = np.linalg.norm(j2d[rand_idx] - j2d, axis=-1).mean()
    assert nn_err < rand_err
