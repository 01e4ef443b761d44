"""Deterministic synthetic motion, rendering and dataset assembly.

Motion is sinusoidal per joint (plus a slow global-rotation drift and a
smooth camera trajectory), so sequences are smooth and periodic. Frames are
rendered as three channels: joint heatmaps, rasterized bones, and a coarse
vertex silhouette. Ground truth (pose, shape, camera, 3D/2D joints) is
exact by construction, and everything is a pure function of (seed, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from tokmesh import body_model as bm
from tokmesh.archive import load_archive, save_archive
from tokmesh.body_model import BodyModelSpec, CameraParams

DEFAULT_MAX_AMPLITUDE = math.pi / 3


@dataclass
class RenderParams:
    joint_sigma: float = 2.0      # px, joint heatmap Gaussians
    bone_halfwidth: float = 1.0   # px, bone falloff
    vertex_sigma: float = 1.5     # px, silhouette splats


@dataclass
class MotionSpec:
    """Per-joint sinusoidal rotations plus global drift and camera trajectory.

    theta_n(t) = amplitude_n * sin(2 pi freq_n t + phase_n) * axis_n; the
    root block additionally drifts at drift_rate about drift_axis.
    """

    axes: np.ndarray        # (24, 3) unit vectors
    amplitude: np.ndarray   # (24,) radians
    frequency: np.ndarray   # (24,) cycles per frame
    phase: np.ndarray       # (24,)
    drift_axis: np.ndarray  # (3,) unit vector
    drift_rate: float       # radians per frame
    cam_s0: float
    cam_s_amp: float
    cam_s_freq: float
    cam_s_phase: float
    cam_t0: np.ndarray      # (2,)
    cam_t_amp: np.ndarray   # (2,)
    cam_t_freq: np.ndarray  # (2,)
    cam_t_phase: np.ndarray  # (2,)

    @classmethod
    def sample(cls, rng: np.random.Generator, max_amplitude: float = DEFAULT_MAX_AMPLITUDE) -> "MotionSpec":
        axes = rng.normal(size=(bm.NUM_JOINTS, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        amplitude = rng.uniform(0.15, max_amplitude, size=bm.NUM_JOINTS)
        amplitude[0] *= 0.5  # keep the whole body roughly in frame
        drift_axis = rng.normal(size=3)
        drift_axis /= np.linalg.norm(drift_axis)
        return cls(
            axes=axes,
            amplitude=amplitude,
            frequency=rng.uniform(1.0 / 32.0, 1.0 / 10.0, size=bm.NUM_JOINTS),
            phase=rng.uniform(0.0, 2.0 * math.pi, size=bm.NUM_JOINTS),
            drift_axis=drift_axis,
            drift_rate=float(rng.uniform(-0.01, 0.01)),
            cam_s0=float(rng.uniform(0.55, 0.8)),
            cam_s_amp=float(rng.uniform(0.0, 0.08)),
            cam_s_freq=float(rng.uniform(1.0 / 64.0, 1.0 / 16.0)),
            cam_s_phase=float(rng.uniform(0.0, 2.0 * math.pi)),
            cam_t0=rng.uniform(-0.05, 0.05, size=2),
            cam_t_amp=rng.uniform(0.0, 0.08, size=2),
            cam_t_freq=rng.uniform(1.0 / 64.0, 1.0 / 16.0, size=2),
            cam_t_phase=rng.uniform(0.0, 2.0 * math.pi, size=2),
        )

    def pose_at(self, t: float) -> np.ndarray:
        """(72,) axis-angle pose at frame t."""
        angles = self.amplitude * np.sin(2.0 * math.pi * self.frequency * t + self.phase)
        blocks = angles[:, None] * self.axes
        blocks[0] = blocks[0] + self.drift_rate * t * self.drift_axis
        return blocks.reshape(-1)

    def camera_at(self, t: float) -> tuple[float, np.ndarray]:
        s = self.cam_s0 * (1.0 + self.cam_s_amp * math.sin(2.0 * math.pi * self.cam_s_freq * t + self.cam_s_phase))
        trans = self.cam_t0 + self.cam_t_amp * np.sin(2.0 * math.pi * self.cam_t_freq * t + self.cam_t_phase)
        return float(s), trans

    def trajectory(self, num_frames: int, stride: int = 1) -> tuple[Tensor, CameraParams]:
        """Pose (T, 72) and camera over frames 0, stride, 2*stride, ..."""
        times = [t * stride for t in range(num_frames)]
        theta = torch.from_numpy(np.stack([self.pose_at(t) for t in times]))
        cams = [self.camera_at(t) for t in times]
        s = torch.tensor([c[0] for c in cams], dtype=torch.float64)
        trans = torch.from_numpy(np.stack([c[1] for c in cams]))
        return theta, CameraParams(s=s, t=trans)


def sample_motion(seed: int, num_frames: int, stride: int = 1,
                  max_amplitude: float = DEFAULT_MAX_AMPLITUDE) -> tuple[MotionSpec, Tensor, CameraParams]:
    """Draw a motion spec and roll it out: (spec, theta (T, 72), camera)."""
    spec = MotionSpec.sample(np.random.default_rng(seed), max_amplitude)
    theta, cam = spec.trajectory(num_frames, stride)
    return spec, theta, cam


def _to_pixels(points: Tensor, height: int, width: int) -> Tensor:
    """Normalized image coords ([-1, 1] spans the frame, y up) to pixel centers."""
    px = (points[..., 0] + 1.0) * width / 2.0 - 0.5
    py = (1.0 - points[..., 1]) * height / 2.0 - 0.5
    return torch.stack([px, py], dim=-1)


def _gaussian_channel(centers_px: Tensor, height: int, width: int, sigma: float) -> Tensor:
    ys = torch.arange(height, dtype=torch.float64)[:, None, None]
    xs = torch.arange(width, dtype=torch.float64)[None, :, None]
    dx = xs - centers_px[:, 0]
    dy = ys - centers_px[:, 1]
    heat = torch.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).sum(dim=-1)
    return heat.clamp(0.0, 1.0)


def _bone_channel(joints_px: Tensor, bones: list[tuple[int, int]], height: int, width: int, halfwidth: float) -> Tensor:
    ys = torch.arange(height, dtype=torch.float64)[:, None, None]
    xs = torch.arange(width, dtype=torch.float64)[None, :, None]
    a = joints_px[[p for p, _ in bones]]  # (B, 2)
    b = joints_px[[c for _, c in bones]]
    d = b - a
    denom = (d * d).sum(-1).clamp(min=1e-12)
    rel_x = xs - a[:, 0]
    rel_y = ys - a[:, 1]
    t = ((rel_x * d[:, 0] + rel_y * d[:, 1]) / denom).clamp(0.0, 1.0)
    ex = rel_x - t * d[:, 0]
    ey = rel_y - t * d[:, 1]
    dist_sq = ex * ex + ey * ey
    return torch.exp(-dist_sq / (halfwidth * halfwidth)).sum(dim=-1).clamp(0.0, 1.0)


def render_frame(j2d: Tensor, v2d: Tensor, bones: list[tuple[int, int]],
                 height: int, width: int, params: RenderParams) -> Tensor:
    """(3, H, W) image from projected joints (24, 2) and vertices (V, 2).

    Channel 0: joint heatmaps; channel 1: bone segments; channel 2: vertex
    silhouette. Off-frame projections simply fall outside the raster.
    """
    j_px = _to_pixels(j2d, height, width)
    v_px = _to_pixels(v2d, height, width)
    return torch.stack(
        [
            _gaussian_channel(j_px, height, width, params.joint_sigma),
            _bone_channel(j_px, bones, height, width, params.bone_halfwidth),
            _gaussian_channel(v_px, height, width, params.vertex_sigma),
        ]
    )


def render(body: BodyModelSpec, theta: Tensor, beta: Tensor, cam: CameraParams,
           image_hw: tuple[int, int] = (64, 64), params: RenderParams | None = None) -> Tensor:
    """Render one (3, H, W) frame from body parameters."""
    params = params or RenderParams()
    with torch.no_grad():
        mesh = bm.forward(body, theta, beta)
        j3d = bm.regress_joints(body, mesh.vertices)
        j2d = bm.project(j3d, cam)
        v2d = bm.project(mesh.vertices, cam)
    return render_frame(j2d, v2d, body.bones(), image_hw[0], image_hw[1], params)


@dataclass
class SynthSequence:
    """One clip with full ground truth and per-term supervision flags."""

    images: Tensor   # (T, 3, H, W)
    theta: Tensor    # (T, 72)
    beta: Tensor     # (T, 10), constant over the clip
    cam_s: Tensor    # (T,)
    cam_t: Tensor    # (T, 2)
    j3d: Tensor      # (T, 24, 3)
    j2d: Tensor      # (T, 24, 2)
    has_theta: bool = True
    has_beta: bool = True
    has_j3d: bool = True
    has_j2d: bool = True

    def __len__(self) -> int:
        return self.images.shape[0]


def make_sequence(body: BodyModelSpec, seed_key, clip_len: int, *, stride: int = 1,
                  image_hw: tuple[int, int] = (64, 64), max_amplitude: float = DEFAULT_MAX_AMPLITUDE,
                  beta_scale: float = 0.5, dropout: float = 0.0,
                  params: RenderParams | None = None) -> SynthSequence:
    params = params or RenderParams()
    rng = np.random.default_rng(seed_key)
    beta = torch.from_numpy(rng.normal(0.0, beta_scale, size=bm.NUM_BETAS))
    motion = MotionSpec.sample(rng, max_amplitude)
    keep_full = bool(rng.uniform() >= dropout)
    theta, cam = motion.trajectory(clip_len, stride)
    betas = beta.expand(clip_len, -1).clone()
    with torch.no_grad():
        mesh = bm.forward(body, theta, betas)
        j3d = bm.regress_joints(body, mesh.vertices)
        j2d = bm.project(j3d, cam)
        v2d = bm.project(mesh.vertices, cam)
    bones = body.bones()
    frames = torch.stack(
        [render_frame(j2d[t], v2d[t], bones, image_hw[0], image_hw[1], params) for t in range(clip_len)]
    )
    return SynthSequence(
        images=frames,
        theta=theta,
        beta=betas,
        cam_s=cam.s,
        cam_t=cam.t,
        j3d=j3d,
        j2d=j2d,
        has_theta=keep_full,
        has_beta=keep_full,
        has_j3d=keep_full,
        has_j2d=True,
    )


def make_dataset(body: BodyModelSpec, seed: int, num_sequences: int, clip_len: int, *,
                 dropout: float = 0.0, stride: int = 1, image_hw: tuple[int, int] = (64, 64),
                 max_amplitude: float = DEFAULT_MAX_AMPLITUDE, beta_scale: float = 0.5,
                 params: RenderParams | None = None) -> list[SynthSequence]:
    """num_sequences clips of clip_len frames; with probability dropout a clip
    keeps only its 2D labels (theta/beta/3D flags cleared)."""
    return [
        make_sequence(
            body, [seed, i], clip_len, stride=stride, image_hw=image_hw,
            max_amplitude=max_amplitude, beta_scale=beta_scale, dropout=dropout, params=params,
        )
        for i in range(num_sequences)
    ]


def jitter_joints(j3d_seq: Tensor, sigma: float, seed: int) -> Tensor:
    """Add i.i.d. zero-mean Gaussian noise of scale sigma to every coordinate."""
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=tuple(j3d_seq.shape))
    return j3d_seq + torch.from_numpy(noise).to(j3d_seq.dtype)


def dataset_to_archive(dataset: list[SynthSequence], path: str | Path) -> None:
    arrays: dict[str, np.ndarray] = {}
    for i, seq in enumerate(dataset):
        key = f"seq{i:04d}"
        arrays[f"{key}/images"] = seq.images.numpy()
        arrays[f"{key}/theta"] = seq.theta.numpy()
        arrays[f"{key}/beta"] = seq.beta.numpy()
        arrays[f"{key}/cam"] = np.concatenate([seq.cam_s.numpy()[:, None], seq.cam_t.numpy()], axis=1)
        arrays[f"{key}/j3d"] = seq.j3d.numpy()
        arrays[f"{key}/j2d"] = seq.j2d.numpy()
        arrays[f"{key}/flags"] = np.array(
            [seq.has_theta, seq.has_beta, seq.has_j3d, seq.has_j2d], dtype=np.uint8
        )
    save_archive(path, arrays, meta={"kind": "dataset", "num_sequences": len(dataset)})


def dataset_from_archive(path: str | Path) -> list[SynthSequence]:
    ar = load_archive(path)
    if ar.meta.get("kind") != "dataset":
        raise ValueError(f"{path}: archive is not a dataset (kind={ar.meta.get('kind')!r})")
    out = []
    for i in range(int(ar.meta["num_sequences"])):
        key = f"seq{i:04d}"
        cam = ar[f"{key}/cam"]
        flags = ar[f"{key}/flags"].astype(bool)
        out.append(
            SynthSequence(
                images=torch.from_numpy(ar[f"{key}/images"]),
                theta=torch.from_numpy(ar[f"{key}/theta"]),
                beta=torch.from_numpy(ar[f"{key}/beta"]),
                cam_s=torch.from_numpy(cam[:, 0].copy()),
                cam_t=torch.from_numpy(cam[:, 1:].copy()),
                j3d=torch.from_numpy(ar[f"{key}/j3d"]),
                j2d=torch.from_numpy(ar[f"{key}/j2d"]),
                has_theta=bool(flags[0]),
                has_beta=bool(flags[1]),
                has_j3d=bool(flags[2]),
                has_j2d=bool(flags[3]),
            )
        )
    return out
