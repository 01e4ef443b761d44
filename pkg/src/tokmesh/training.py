"""Progressive-phase training loop.

Phase 1 trains the single-frame model on individual frames. Phase 2 adds a
freshly initialized temporal model and trains everything on mixed-supervision
clips (velocity weight still zero). Phase 3 fine-tunes with SGD on fully
supervised clips with the velocity term on. Runs are bitwise reproducible
from (config, seed) in single-threaded mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor, nn

from tokmesh import body_model as bm
from tokmesh.base_model import BaseModel
from tokmesh.body_model import BodyModelSpec, build_mini_model
from tokmesh.checkpoint import Checkpoint, build_models, checkpoint_from_models, save_checkpoint
from tokmesh.config import PhaseConfig, RunConfig
from tokmesh.losses import GroundTruth, total_loss
from tokmesh.synthdata import RenderParams, SynthSequence, make_dataset
from tokmesh.temporal import _make_temporal, video_predict

LOG_COLUMNS = ("phase", "step", "lr", "total", "smpl", "norm", "joints3d", "joints2d", "velocity")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; a diagnostic dump is written when possible."""


def set_determinism(seed: int, threads: int = 1) -> None:
    torch.set_num_threads(threads)
    torch.manual_seed(seed)


@dataclass
class TensorBatchSource:
    """Dataset flattened to indexable tensors; frames (N, ...) or clips (N, T, ...)."""

    images: Tensor
    theta: Tensor
    beta: Tensor
    j3d: Tensor
    j2d: Tensor
    has_theta: Tensor
    has_beta: Tensor
    has_j3d: Tensor
    has_j2d: Tensor

    def __len__(self) -> int:
        return self.images.shape[0]

    def gather(self, idx: Tensor) -> tuple[Tensor, GroundTruth]:
        gt = GroundTruth(
            theta=self.theta[idx],
            beta=self.beta[idx],
            j3d=self.j3d[idx],
            j2d=self.j2d[idx],
            has_theta=self.has_theta[idx],
            has_beta=self.has_beta[idx],
            has_j3d=self.has_j3d[idx],
            has_j2d=self.has_j2d[idx],
        )
        return self.images[idx], gt


def _flags(dataset: list[SynthSequence], name: str, per_frame: bool) -> Tensor:
    vals = [getattr(s, name) for s in dataset]
    if per_frame:
        vals = [v for s, v in zip(dataset, vals) for _ in range(len(s))]
    return torch.tensor(vals, dtype=torch.bool)


def pool_frames(dataset: list[SynthSequence]) -> TensorBatchSource:
    """Flatten clips into a pool of independently sampled frames."""
    return TensorBatchSource(
        images=torch.cat([s.images for s in dataset]),
        theta=torch.cat([s.theta for s in dataset]),
        beta=torch.cat([s.beta for s in dataset]),
        j3d=torch.cat([s.j3d for s in dataset]),
        j2d=torch.cat([s.j2d for s in dataset]),
        has_theta=_flags(dataset, "has_theta", True),
        has_beta=_flags(dataset, "has_beta", True),
        has_j3d=_flags(dataset, "has_j3d", True),
        has_j2d=_flags(dataset, "has_j2d", True),
    )


def stack_sequences(dataset: list[SynthSequence]) -> TensorBatchSource:
    return TensorBatchSource(
        images=torch.stack([s.images for s in dataset]),
        theta=torch.stack([s.theta for s in dataset]),
        beta=torch.stack([s.beta for s in dataset]),
        j3d=torch.stack([s.j3d for s in dataset]),
        j2d=torch.stack([s.j2d for s in dataset]),
        has_theta=_flags(dataset, "has_theta", False),
        has_beta=_flags(dataset, "has_beta", False),
        has_j3d=_flags(dataset, "has_j3d", False),
        has_j2d=_flags(dataset, "has_j2d", False),
    )


def image_mode_loss(base: BaseModel, body: BodyModelSpec, images: Tensor, gt: GroundTruth, weights):
    tok, _ = base.forward_tokens(images)
    est = base.decode(tok)
    mesh = bm.forward(body, est.theta, est.beta)
    j3d = bm.regress_joints(body, mesh.vertices)
    j2d = bm.project(j3d, est.cam)
    return total_loss(est.theta, est.beta, j3d, j2d, gt, weights, sequence=False)


def video_mode_loss(base: BaseModel, temporal: nn.Module | None, body: BodyModelSpec,
                    frames: Tensor, gt: GroundTruth, weights):
    est, mesh, j2d = video_predict(frames, base, temporal, body)
    j3d = bm.regress_joints(body, mesh.vertices)
    return total_loss(est.theta, est.beta, j3d, j2d, gt, weights, sequence=True)


def run_phase(
    base: BaseModel,
    temporal: nn.Module | None,
    body: BodyModelSpec,
    dataset: list[SynthSequence],
    phase: PhaseConfig,
    *,
    phase_index: int,
    sample_seed: int,
    log_rows: list[dict] | None = None,
    train_base: bool = True,
    dump_dir: Path | None = None,
) -> None:
    """Optimize in place for phase.steps steps; appends one log row per step."""
    params: list[Tensor] = list(base.parameters()) if train_base else []
    if phase.mode == "video" and temporal is not None:
        params += list(temporal.parameters())
    if not params:
        raise ValueError("no trainable parameters selected")
    if phase.optimizer == "adam":
        opt = torch.optim.Adam(params, lr=phase.lr)
    else:
        opt = torch.optim.SGD(params, lr=phase.lr)
    source = pool_frames(dataset) if phase.mode == "image" else stack_sequences(dataset)
    rng = np.random.default_rng(sample_seed)
    for step in range(phase.steps):
        if step in phase.lr_decay_steps:
            for group in opt.param_groups:
                group["lr"] /= 10.0
        idx = torch.from_numpy(rng.integers(0, len(source), size=phase.batch_size))
        images, gt = source.gather(idx)
        if phase.mode == "image":
            loss, parts = image_mode_loss(base, body, images, gt, phase.weights)
        else:
            loss, parts = video_mode_loss(base, temporal, body, images, gt, phase.weights)
        if not bool(torch.isfinite(loss)):
            if dump_dir is not None:
                _write_diagnostic(dump_dir, base, temporal, phase_index, step, parts)
            raise TrainingDivergedError(f"non-finite loss at phase {phase_index} step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log_rows is not None:
            row = {"phase": phase_index, "step": step, "lr": opt.param_groups[0]["lr"]}
            row.update({k: float(v.detach()) for k, v in parts.items()})
            log_rows.append(row)


def _write_diagnostic(dump_dir: Path, base: BaseModel, temporal: nn.Module | None,
                      phase_index: int, step: int, parts: dict) -> None:
    from tokmesh.archive import save_archive

    arrays = {f"base/{k}": v.detach().numpy() for k, v in base.state_dict().items()}
    if temporal is not None:
        arrays.update({f"temporal/{k}": v.detach().numpy() for k, v in temporal.state_dict().items()})
    meta = {
        "kind": "diagnostic",
        "phase": phase_index,
        "step": step,
        "loss_terms": {k: float(v.detach()) for k, v in parts.items()},
    }
    save_archive(Path(dump_dir) / "diagnostic_dump.naa", arrays, meta=meta)


def phase_data_seed(seed: int, phase_index: int) -> int:
    return seed * 9973 + phase_index


def eval_data_seed(seed: int) -> int:
    return seed * 9973 + 101


def render_params(config: RunConfig) -> RenderParams:
    d = config.data
    return RenderParams(joint_sigma=d.joint_sigma, bone_halfwidth=d.bone_halfwidth, vertex_sigma=d.vertex_sigma)


def make_phase_dataset(config: RunConfig, phase: PhaseConfig, phase_index: int,
                       body: BodyModelSpec) -> list[SynthSequence]:
    d = config.data
    return make_dataset(
        body,
        seed=phase_data_seed(config.seed, phase_index),
        num_sequences=d.num_sequences,
        clip_len=d.clip_len,
        dropout=phase.data_dropout,
        stride=d.stride,
        image_hw=(config.model.height, config.model.width),
        max_amplitude=d.max_amplitude,
        beta_scale=d.beta_scale,
        params=render_params(config),
    )


def write_loss_log(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in LOG_COLUMNS])


def train(config: RunConfig, phase: int | None = None, init: Checkpoint | None = None,
          out_dir: str | Path | None = None) -> Checkpoint:
    """Run the configured phases (all of them, or a single 1-based phase).

    Image-mode phases never instantiate temporal parameters; the first video
    phase creates them fresh (also when warm-starting from an image-only
    checkpoint). Writes loss_log.csv and per-phase checkpoints to out_dir.
    """
    if config.model.channels != 3:
        raise ValueError("the synthetic renderer produces 3-channel images")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    set_determinism(config.seed, config.threads)
    body = build_mini_model(config.data.body_seed, config.data.vertices)

    if init is not None:
        base, temporal = build_models(init)
    else:
        base = BaseModel(config.model)
        temporal = None

    if phase is None:
        phase_indices = list(range(1, len(config.phases) + 1))
    else:
        if not 1 <= phase <= len(config.phases):
            raise ValueError(f"phase must be in 1..{len(config.phases)}, got {phase}")
        phase_indices = [phase]

    rows: list[dict] = []
    ckpt = None
    for k in phase_indices:
        phase_cfg = config.phases[k - 1]
        if phase_cfg.mode == "video" and temporal is None:
            torch.manual_seed(config.seed + 17 * k)
            temporal = _make_temporal(config.temporal)
        dataset = make_phase_dataset(config, phase_cfg, k, body)
        run_phase(
            base, temporal, body, dataset, phase_cfg,
            phase_index=k,
            sample_seed=phase_data_seed(config.seed, k) + 1,
            log_rows=rows,
            dump_dir=out,
        )
        ckpt = checkpoint_from_models(config, base, temporal, phase=k, step=phase_cfg.steps)
        save_checkpoint(ckpt, out / f"checkpoint_phase{k}.naa")

    write_loss_log(rows, out / "loss_log.csv")
    save_checkpoint(ckpt, out / "checkpoint.naa")
    return ckpt
