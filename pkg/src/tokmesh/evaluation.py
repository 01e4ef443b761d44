"""Evaluation, attention dumps and prior-token export on frozen checkpoints."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
from torch import nn

from tokmesh import body_model as bm
from tokmesh import metrics
from tokmesh.archive import save_archive
from tokmesh.base_model import BaseModel
from tokmesh.body_model import BodyModelSpec, build_mini_model
from tokmesh.checkpoint import Checkpoint, build_models
from tokmesh.synthdata import SynthSequence
from tokmesh.temporal import PerJointTemporal, video_predict

CSV_HEADER = ("metric", "value", "unit", "config_hash")


def body_from_config(config) -> BodyModelSpec:
    return build_mini_model(config.data.body_seed, config.data.vertices)


def sequence_predictions(base: BaseModel, temporal: nn.Module | None, body: BodyModelSpec,
                         images: torch.Tensor) -> dict[str, np.ndarray]:
    """Per-frame predictions for one (T, C, H, W) clip, as numpy arrays."""
    with torch.no_grad():
        est, mesh, j2d = video_predict(images, base, temporal, body)
        j3d = bm.regress_joints(body, mesh.vertices)
    return {
        "theta": est.theta.numpy(),
        "beta": est.beta.numpy(),
        "cam_s": est.cam.s.numpy(),
        "cam_t": est.cam.t.numpy(),
        "vertices": mesh.vertices.numpy(),
        "j3d": j3d.numpy(),
        "j2d": j2d.numpy(),
    }


def gt_vertices(body: BodyModelSpec, seq: SynthSequence) -> np.ndarray:
    if not (seq.has_theta and seq.has_beta):
        raise ValueError("sequence lacks pose/shape ground truth; cannot compute vertex error")
    with torch.no_grad():
        return bm.forward(body, seq.theta, seq.beta).vertices.numpy()


def sequence_metric_values(pred: dict[str, np.ndarray], seq: SynthSequence,
                           body: BodyModelSpec, root_row: np.ndarray) -> dict[str, float]:
    """All four metrics for one clip's predictions against its ground truth."""
    gt_j3d = seq.j3d.numpy()
    values = {
        "mpjpe": metrics.mpjpe(pred["j3d"], gt_j3d),
        "pa_mpjpe": metrics.pa_mpjpe(pred["j3d"], gt_j3d),
        "pve": metrics.pve(pred["vertices"], gt_vertices(body, seq), root_row),
    }
    if len(seq) >= 3:
        values["accel"] = metrics.accel_error(pred["j3d"], gt_j3d)
    return values


def evaluate_models(base: BaseModel, temporal: nn.Module | None, body: BodyModelSpec,
                    dataset: list[SynthSequence]) -> dict[str, float]:
    """Mean of each metric over the dataset's sequences, in model units."""
    root_row = body.joint_regressor[0].numpy()
    per_metric: dict[str, list[float]] = {}
    for seq in dataset:
        pred = sequence_predictions(base, temporal, body, seq.images)
        for name, value in sequence_metric_values(pred, seq, body, root_row).items():
            per_metric.setdefault(name, []).append(value)
    return {name: float(np.mean(vals)) for name, vals in per_metric.items()}


def metric_rows(values: dict[str, float], config) -> list[tuple[str, float, str]]:
    """Apply unit conversion: unit_scale maps model units to mm, fps fixes time."""
    scale = config.unit_scale
    rows = []
    for name in ("mpjpe", "pa_mpjpe", "pve"):
        if name in values:
            v, unit = (values[name] * scale, "mm") if scale else (values[name], "model_units")
            rows.append((name, v, unit))
    if "accel" in values:
        v = values["accel"]
        if scale and config.fps:
            rows.append(("accel", v * scale * config.fps**2, "mm/s2"))
        else:
            rows.append(("accel", v, "units/frame2"))
    return rows


def write_metrics_csv(rows: list[tuple[str, float, str]], config_hash: str, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for name, value, unit in rows:
            writer.writerow([name, repr(float(value)), unit, config_hash])


def evaluate(ckpt: Checkpoint, dataset: list[SynthSequence], out_csv: str | Path | None = None) -> dict[str, float]:
    """All four metrics for a checkpoint on a dataset; optionally writes the CSV."""
    base, temporal = build_models(ckpt)
    body = body_from_config(ckpt.config)
    values = evaluate_models(base, temporal, body, dataset)
    if out_csv is not None:
        rows = metric_rows(values, ckpt.config)
        write_metrics_csv(rows, ckpt.config.config_hash(), out_csv)
    return values


def dump_attention(ckpt: Checkpoint, images: torch.Tensor, path: str | Path) -> dict[str, np.ndarray]:
    """Write attention matrices for one (T, C, H, W) clip.

    base_prior_attention: (T, heads, 26, S) last-layer attention from each
    prior token to the image patches. temporal_attention (per-joint mode):
    (24, layers, heads, T, T), every row a softmax distribution over frames.
    """
    base, temporal = build_models(ckpt)
    s = ckpt.config.model.num_patches
    arrays: dict[str, np.ndarray] = {}
    with torch.no_grad():
        tok, base_attns = base.forward_tokens(images, need_attn=True)
        arrays["base_prior_attention"] = base_attns[-1][:, :, s:, :s].numpy()
        if temporal is not None:
            t = images.shape[0]
            joint = tok.joint.reshape(1, t, -1, ckpt.config.model.dim)
            _, attn = temporal(joint, need_attn=True)
            key = "temporal_attention" if isinstance(temporal, PerJointTemporal) else "temporal_attention_pose"
            arrays[key] = attn[0].numpy()
    save_archive(path, arrays, meta={"kind": "attention_dump", "config_hash": ckpt.config.config_hash(),
                                     "temporal_mode": ckpt.config.temporal.mode if temporal is not None else None})
    return arrays


def attention_period_probe(temporal_attention: np.ndarray) -> list[int]:
    """Per joint: the most common off-diagonal attention lag in the last layer,
    head-averaged. A periodic motion shows up as a lag near its period.
    Reported for inspection, never asserted."""
    att = temporal_attention[:, -1].mean(axis=1)  # (24, T, T)
    t = att.shape[-1]
    lags = []
    for j in range(att.shape[0]):
        row_lags = []
        for row in range(t):
            masked = att[j, row].copy()
            lo, hi = max(0, row - 1), min(t, row + 2)
            masked[lo:hi] = -np.inf  # ignore self and immediate neighbours
            row_lags.append(abs(int(np.argmax(masked)) - row))
        vals, counts = np.unique(row_lags, return_counts=True)
        lags.append(int(vals[np.argmax(counts)]))
    return lags


def export_prior(ckpt: Checkpoint, path: str | Path) -> dict[str, np.ndarray]:
    """Decode the prior tokens (no image) and write pose, shape and mesh."""
    base, _ = build_models(ckpt)
    body = body_from_config(ckpt.config)
    with torch.no_grad():
        est, mesh = base.prior_estimate(body)
    arrays = {
        "theta": est.theta.numpy(),
        "beta": est.beta.numpy(),
        "vertices": mesh.vertices.numpy(),
        "joints": mesh.joints.numpy(),
    }
    save_archive(path, arrays, meta={"kind": "prior_export", "config_hash": ckpt.config.config_hash()})
    return arrays
