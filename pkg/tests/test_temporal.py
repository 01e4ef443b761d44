import numpy as np
import pytest
import torch

from tokmesh.base_model import BaseModel, ModelConfig
from tokmesh.body_model import build_mini_model
from tokmesh.temporal import (
    PerJointTemporal,
    TemporalConfig,
    WholePoseTemporal,
    interpolate_embedding,
    video_predict,
)


def rand_tokens(b, t, n=24, d=48, seed=0):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.normal(size=(b, t, n, d)))


@pytest.fixture()
def per_joint():
    torch.manual_seed(0)
    return PerJointTemporal(TemporalConfig(identity_residual_init=False))


@pytest.fixture()
def whole_pose():
    torch.manual_seed(0)
    return WholePoseTemporal(TemporalConfig(mode="whole_pose", identity_residual_init=False))


class TestInterpolateEmbedding:
    def test_same_length_is_identity(self):
        e = torch.randn(8, 48, dtype=torch.float64)
        assert interpolate_embedding(e, 8) is e

    def test_two_to_three_rows(self):
        e = torch.stack([torch.full((4,), 1.0, dtype=torch.float64), torch.full((4,), 3.0, dtype=torch.float64)])
        out = interpolate_embedding(e, 3)
        assert torch.allclose(out[0], e[0])
        assert torch.allclose(out[1], (e[0] + e[1]) / 2)
        assert torch.allclose(out[2], e[1])

    def test_constant_rows_stay_constant(self):
        e = torch.full((8, 48), 2.5, dtype=torch.float64)
        for t in (1, 3, 8, 17, 32):
            assert torch.allclose(interpolate_embedding(e, t), torch.full((t, 48), 2.5, dtype=torch.float64))

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            interpolate_embedding(torch.zeros(8, 4, dtype=torch.float64), 0)


class TestPerJoint:
    @pytest.mark.parametrize("t", [1, 4, 8, 16, 32])
    def test_shape_preserved(self, per_joint, t):
        x = rand_tokens(2, t)
        out, _ = per_joint(x)
        assert out.shape == x.shape

    def test_unbatched_input(self, per_joint):
        x = rand_tokens(1, 6)[0]
        out, _ = per_joint(x)
        assert out.shape == x.shape

    def test_joint_permutation_equivariance(self, per_joint):
        x = rand_tokens(1, 8, seed=3)
        perm = torch.randperm(24)
        out_perm, _ = per_joint(x[:, :, perm])
        out, _ = per_joint(x)
        assert torch.allclose(out_perm, out[:, :, perm], atol=1e-12)

    def test_zeroed_residuals_add_embedding_only(self):
        torch.manual_seed(0)
        model = PerJointTemporal(TemporalConfig(identity_residual_init=True))
        x = rand_tokens(2, 8, seed=5)
        out, _ = model(x)
        expected = x + model.temporal_embedding[None, :, None, :]
        assert torch.allclose(out, expected, atol=1e-12)

    def test_time_reversal_covariance_without_embedding(self, per_joint):
        with torch.no_grad():
            per_joint.temporal_embedding.zero_()
        x = rand_tokens(1, 8, seed=9)
        fwd, _ = per_joint(x)
        rev, _ = per_joint(torch.flip(x, dims=[1]))
        assert torch.allclose(rev, torch.flip(fwd, dims=[1]), atol=1e-9)

    def test_attention_shapes_and_rows(self, per_joint):
        x = rand_tokens(1, 8)
        _, attn = per_joint(x, need_attn=True)
        cfg = per_joint.config
        assert attn.shape == (1, 24, cfg.layers, cfg.heads, 8, 8)
        assert float((attn.sum(-1) - 1.0).abs().max().detach()) < 1e-6


class TestWholePose:
    def test_piece_width(self, whole_pose):
        assert whole_pose.down_weight.shape == (24, 48, 2)

    def test_dim_not_divisible_rejected(self):
        with pytest.raises(ValueError):
            TemporalConfig(dim=50, heads=2, mode="whole_pose")

    def test_shape_preserved(self, whole_pose):
        x = rand_tokens(2, 8)
        out, _ = whole_pose(x)
        assert out.shape == x.shape

    def test_joint_permutation_equivariance_fails(self, whole_pose):
        x = rand_tokens(1, 8, seed=3)
        perm = torch.roll(torch.arange(24), 1)
        out_perm, _ = whole_pose(x[:, :, perm])
        out, _ = whole_pose(x)
        assert not torch.allclose(out_perm, out[:, :, perm], atol=1e-6)


@pytest.fixture()
def setup():
    torch.manual_seed(1)
    body = build_mini_model(0, 64)
    base = BaseModel(ModelConfig())
    temporal = PerJointTemporal(TemporalConfig(identity_residual_init=False))
    rng = np.random.default_rng(2)
    frames = torch.from_numpy(rng.uniform(0, 1, (4, 3, 64, 64)))
    return body, base, temporal, frames


class TestVideoPredict:
    def test_t1_matches_image_mode_shapes(self, setup):
        body, base, temporal, frames = setup
        est, mesh, j2d = video_predict(frames[:1], base, temporal, body)
        est_img, mesh_img, j2d_img = base.predict(frames[:1], body)
        assert est.theta.shape == est_img.theta.shape
        assert mesh.vertices.shape == mesh_img.vertices.shape
        assert j2d.shape == j2d_img.shape

    def test_shape_and_camera_bypass(self, setup):
        body, base, temporal, frames = setup
        est_with, _, _ = video_predict(frames, base, temporal, body)
        with torch.no_grad():
            for p in temporal.parameters():
                p.add_(torch.randn_like(p))
        est_mutated, _, _ = video_predict(frames, base, temporal, body)
        est_none, _, _ = video_predict(frames, base, None, body)
        for a, b in ((est_with, est_mutated), (est_with, est_none)):
            assert torch.equal(a.beta, b.beta)
            assert torch.equal(a.cam.s, b.cam.s)
            assert torch.equal(a.cam.t, b.cam.t)
        assert not torch.equal(est_with.theta, est_mutated.theta)

    def test_interpolation_accepts_longer_clips(self, setup):
        body, base, temporal, _ = setup
        rng = np.random.default_rng(4)
        for t in (8, 16, 32):
            frames = torch.from_numpy(rng.uniform(0, 1, (t, 3, 64, 64)))
            est, _, j2d = video_predict(frames, base, temporal, body)
            assert est.theta.shape == (t, 72)
            assert j2d.shape == (t, 24, 2)
