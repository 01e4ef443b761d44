"""Training losses with supervision-availability masking.

Every term reduces by root-mean-square over the elements of one sample, so
the balancing weights are independent of tensor sizes. Batched inputs may
carry any number of leading sample dimensions; availability masks broadcast
against them from the left, and masked-out samples contribute zero (the
denominator still counts them, so dropping supervision never increases a
term).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import torch
from torch import Tensor

# Clamp floor that keeps sqrt gradients finite near zero error.
_EPS = 1e-24


def _safe_sqrt(x: Tensor) -> Tensor:
    """sqrt that is exactly 0 at x == 0 with a zero (not NaN) gradient there."""
    return torch.where(x > 0, x.clamp(min=_EPS).sqrt(), x * 0.0)


@dataclass(frozen=True)
class LossWeights:
    """Balancing weights: pose, shape, parameter-norm, 3D joints, 2D joints, velocity."""

    theta: float = 60.0
    beta: float = 0.06
    norm: float = 1.0
    joints3d: float = 600.0
    joints2d: float = 300.0
    velocity: float = 600.0

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be nonnegative, got {value}")

    def with_overrides(self, **kwargs: float) -> "LossWeights":
        return replace(self, **kwargs)


@dataclass
class GroundTruth:
    """Supervision record. Flags default to field presence; a truthy flag with a
    missing field is an error. j2d_vis optionally masks individual 2D joints."""

    theta: Optional[Tensor] = None
    beta: Optional[Tensor] = None
    j3d: Optional[Tensor] = None
    j2d: Optional[Tensor] = None
    has_theta: Tensor | bool | None = None
    has_beta: Tensor | bool | None = None
    has_j3d: Tensor | bool | None = None
    has_j2d: Tensor | bool | None = None
    j2d_vis: Optional[Tensor] = None

    def __post_init__(self) -> None:
        if self.theta is None and self.beta is None and self.j3d is None and self.j2d is None:
            raise ValueError("GroundTruth needs at least one supervision field")
        for name in ("theta", "beta", "j3d", "j2d"):
            flag = getattr(self, "has_" + name)
            value = getattr(self, name)
            if flag is None:
                setattr(self, "has_" + name, value is not None)
            elif _flag_any(flag) and value is None:
                raise ValueError(f"has_{name} is set but {name} is missing")


def _flag_any(flag: Tensor | bool) -> bool:
    return bool(flag.any()) if isinstance(flag, Tensor) else bool(flag)


def _sample_rms(diff: Tensor, event_dims: int) -> Tensor:
    """RMS over the trailing event_dims axes; remaining axes index samples."""
    dims = tuple(range(diff.dim() - event_dims, diff.dim()))
    return _safe_sqrt(diff.pow(2).mean(dim=dims))


def _masked_mean(per_sample: Tensor, flag: Tensor | bool) -> Tensor:
    """Mean over samples, with unflagged samples contributing zero."""
    if not isinstance(flag, Tensor):
        if not flag:
            return per_sample.new_zeros(())
        return per_sample.mean()
    mask = flag.to(per_sample.dtype)
    # Left-aligned broadcast: a (B,) flag masks (B, T, ...) samples wholesale.
    while mask.dim() < per_sample.dim():
        mask = mask[..., None]
    return (per_sample * mask).mean()


def smpl_param_loss(theta: Tensor, beta: Tensor, gt: GroundTruth, weights: LossWeights) -> Tensor:
    """w_theta * rms(theta - theta_gt) + w_beta * rms(beta - beta_gt), masked."""
    total = theta.new_zeros(())
    if _flag_any(gt.has_theta):
        total = total + weights.theta * _masked_mean(_sample_rms(theta - gt.theta, 1), gt.has_theta)
    if _flag_any(gt.has_beta):
        total = total + weights.beta * _masked_mean(_sample_rms(beta - gt.beta, 1), gt.has_beta)
    return total


def param_norm_loss(theta: Tensor, beta: Tensor) -> Tensor:
    """rms(theta) + rms(beta); the magnitude regularizer, never masked."""
    return _sample_rms(theta, 1).mean() + _sample_rms(beta, 1).mean()


def joint3d_loss(j3d: Tensor, gt: GroundTruth) -> Tensor:
    """RMS of 3D joint coordinate differences, per frame, masked."""
    if not _flag_any(gt.has_j3d):
        return j3d.new_zeros(())
    return _masked_mean(_sample_rms(j3d - gt.j3d, 2), gt.has_j3d)


def joint2d_loss(j2d: Tensor, gt: GroundTruth) -> Tensor:
    """RMS of projected joint differences; invisible joints leave the mean."""
    if not _flag_any(gt.has_j2d):
        return j2d.new_zeros(())
    diff = j2d - gt.j2d
    if gt.j2d_vis is None:
        per_sample = _sample_rms(diff, 2)
    else:
        vis = gt.j2d_vis.to(diff.dtype)[..., None]
        sq = (diff.pow(2) * vis).sum(dim=(-1, -2))
        count = (vis.sum(dim=(-1, -2))).clamp(min=1.0)
        per_sample = _safe_sqrt(sq / count)
    return _masked_mean(per_sample, gt.has_j2d)


def velocity_loss(j3d_seq: Tensor, gt: GroundTruth) -> Tensor:
    """RMS difference of frame-to-frame joint velocities over a (..., T, 24, 3)
    sequence; zero when T < 2."""
    if j3d_seq.shape[-3] < 2:
        return j3d_seq.new_zeros(())
    if not _flag_any(gt.has_j3d):
        return j3d_seq.new_zeros(())
    vel_pred = j3d_seq[..., 1:, :, :] - j3d_seq[..., :-1, :, :]
    vel_gt = gt.j3d[..., 1:, :, :] - gt.j3d[..., :-1, :, :]
    return _masked_mean(_sample_rms(vel_pred - vel_gt, 3), gt.has_j3d)


def total_loss(
    theta: Tensor,
    beta: Tensor,
    j3d: Tensor,
    j2d: Tensor,
    gt: GroundTruth,
    weights: LossWeights,
    *,
    sequence: bool = False,
) -> tuple[Tensor, dict[str, Tensor]]:
    """Weighted sum of all terms.

    With sequence=True the inputs carry a time axis ((..., T, 72) and so on)
    and the velocity term is computed along it; otherwise the velocity term
    is zero.
    """
    parts = {
        "smpl": smpl_param_loss(theta, beta, gt, weights),
        "norm": param_norm_loss(theta, beta),
        "joints3d": joint3d_loss(j3d, gt),
        "joints2d": joint2d_loss(j2d, gt),
    }
    if sequence and weights.velocity > 0:
        parts["velocity"] = velocity_loss(j3d, gt)
    else:
        parts["velocity"] = theta.new_zeros(())
    total = (
        parts["smpl"]
        + weights.norm * parts["norm"]
        + weights.joints3d * parts["joints3d"]
        + weights.joints2d * parts["joints2d"]
        + weights.velocity * parts["velocity"]
    )
    parts["total"] = total
    return total, parts
