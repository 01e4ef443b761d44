"""Temporal-modeling comparison: image-only vs whole-pose vs per-joint.

Per seed: train the single-frame model on clips whose 3D/2D targets carry
per-frame jitter (pose and shape supervision withheld), then train each
temporal variant on the same noisy targets with the per-frame model frozen
and the velocity loss on. All three are scored by acceleration error
against clean held-out clips. Freezing the per-frame model isolates what
temporal modeling itself contributes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from tokmesh.base_model import BaseModel, ModelConfig
from tokmesh.body_model import CameraParams, build_mini_model, project
from tokmesh.config import PhaseConfig
from tokmesh.evaluation import sequence_predictions
from tokmesh.losses import LossWeights
from tokmesh.metrics import accel_error
from tokmesh.synthdata import SynthSequence, jitter_joints, make_dataset
from tokmesh.temporal import TemporalConfig, _make_temporal
from tokmesh.training import run_phase


@dataclass
class AblationSettings:
    seeds: tuple[int, ...] = (0, 1, 2)
    train_sequences: int = 24
    clip_len: int = 8
    eval_sequences: int = 6
    eval_len: int = 16
    jitter_sigma: float = 0.05
    base_steps: int = 600
    base_batch: int = 16
    base_lr: float = 1e-3
    temporal_steps: int = 400
    temporal_batch: int = 4
    temporal_lr: float = 1e-3
    vertices: int = 200
    body_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)


@dataclass
class AblationOutcome:
    accel_image: list[float]
    accel_per_joint: list[float]
    accel_whole_pose: list[float]

    def means(self) -> dict[str, float]:
        return {
            "image": float(np.mean(self.accel_image)),
            "per_joint": float(np.mean(self.accel_per_joint)),
            "whole_pose": float(np.mean(self.accel_whole_pose)),
        }


def inject_target_noise(dataset: list[SynthSequence], sigma: float, seed: int) -> list[SynthSequence]:
    """Jitter 3D targets per frame, reproject the 2D targets from them, and
    withhold pose/shape supervision. Images stay clean."""
    noisy = []
    for i, seq in enumerate(dataset):
        j3d = jitter_joints(seq.j3d, sigma, seed * 10007 + i)
        j2d = project(j3d, CameraParams(s=seq.cam_s, t=seq.cam_t))
        noisy.append(replace(seq, j3d=j3d, j2d=j2d, has_theta=False, has_beta=False))
    return noisy


def _mean_accel(base, temporal, body, dataset) -> float:
    errs = []
    for seq in dataset:
        pred = sequence_predictions(base, temporal, body, seq.images)
        errs.append(accel_error(pred["j3d"], seq.j3d.numpy()))
    return float(np.mean(errs))


def run_temporal_ablation(settings: AblationSettings = AblationSettings()) -> AblationOutcome:
    body = build_mini_model(settings.body_seed, settings.vertices)
    image_hw = (settings.model.height, settings.model.width)
    out = AblationOutcome([], [], [])

    base_phase = PhaseConfig(
        steps=settings.base_steps, batch_size=settings.base_batch, mode="image",
        optimizer="adam", lr=settings.base_lr, lr_decay_steps=[int(settings.base_steps * 0.7)],
        weights=LossWeights(velocity=0.0),
    )
    temporal_phase = PhaseConfig(
        steps=settings.temporal_steps, batch_size=settings.temporal_batch, mode="video",
        optimizer="adam", lr=settings.temporal_lr, lr_decay_steps=[int(settings.temporal_steps * 0.7)],
        weights=LossWeights(velocity=600.0),
    )

    for seed in settings.seeds:
        clean = make_dataset(body, seed=7000 + seed, num_sequences=settings.train_sequences,
                             clip_len=settings.clip_len, image_hw=image_hw)
        train_data = inject_target_noise(clean, settings.jitter_sigma, seed=seed)
        eval_data = make_dataset(body, seed=8000 + seed, num_sequences=settings.eval_sequences,
                                 clip_len=settings.eval_len, image_hw=image_hw)

        torch.manual_seed(seed)
        base = BaseModel(settings.model)
        run_phase(base, None, body, train_data, base_phase, phase_index=1, sample_seed=100 + seed)
        out.accel_image.append(_mean_accel(base, None, body, eval_data))

        for mode, bucket in (("per_joint", out.accel_per_joint), ("whole_pose", out.accel_whole_pose)):
            torch.manual_seed(1000 + seed)
            temporal = _make_temporal(replace(settings.temporal, mode=mode))
            run_phase(base, temporal, body, train_data, temporal_phase, phase_index=2,
                      sample_seed=200 + seed, train_base=False)
            bucket.append(_mean_accel(base, temporal, body, eval_data))

    return out
