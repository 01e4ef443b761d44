"""Temporal models over per-frame joint tokens.

PerJointTemporal runs one shared transformer over each joint's token
sequence independently (24 length-T sequences per clip). WholePoseTemporal
is the comparison mode: per frame it compresses every joint token to
dim/24 channels, concatenates them into a single pose vector, runs the
transformer over the T pose vectors, and expands back. Shape and camera
tokens never pass through either model.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from einops import rearrange
from torch import Tensor, nn

from tokmesh import body_model as bm
from tokmesh.base_model import BaseModel, MeshOutput, SmplEstimate, TokenOutputs
from tokmesh.body_model import BodyModelSpec
from tokmesh.transformer import TransformerEncoder

NUM_JOINTS = 24


@dataclass
class TemporalConfig:
    """Temporal transformer geometry. base_len is the trained clip length; other
    lengths are reached by interpolating the temporal embedding."""

    dim: int = 48
    layers: int = 2
    heads: int = 4
    ffn_mult: int = 4
    base_len: int = 8
    mode: str = "per_joint"  # or "whole_pose"
    identity_residual_init: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("per_joint", "whole_pose"):
            raise ValueError(f"unknown temporal mode {self.mode!r}")
        if self.mode == "whole_pose" and self.dim % NUM_JOINTS != 0:
            raise ValueError(f"whole_pose mode needs dim divisible by {NUM_JOINTS}, got {self.dim}")

    @classmethod
    def paper_scale(cls) -> "TemporalConfig":
        return cls(dim=768, layers=3, heads=12, ffn_mult=4, base_len=16)


def interpolate_embedding(embedding: Tensor, length: int) -> Tensor:
    """Linearly resample a (T0, d) embedding along time to (length, d).

    length == T0 returns the embedding unchanged; length 1 returns row 0.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    t0 = embedding.shape[0]
    if length == t0:
        return embedding
    pos = torch.linspace(0.0, t0 - 1.0, length, dtype=embedding.dtype, device=embedding.device)
    lo = pos.floor().long().clamp(max=t0 - 1)
    hi = (lo + 1).clamp(max=t0 - 1)
    frac = (pos - lo.to(embedding.dtype))[:, None]
    return embedding[lo] * (1.0 - frac) + embedding[hi] * frac


def _make_temporal(config: TemporalConfig) -> "PerJointTemporal | WholePoseTemporal":
    cls = PerJointTemporal if config.mode == "per_joint" else WholePoseTemporal
    return cls(config)


class PerJointTemporal(nn.Module):
    """Shared transformer over each joint's length-T token sequence."""

    def __init__(self, config: TemporalConfig):
        super().__init__()
        if config.mode != "per_joint":
            raise ValueError("config.mode must be 'per_joint'")
        self.config = config
        self.temporal_embedding = nn.Parameter(torch.randn(config.base_len, config.dim).double() * 0.02)
        self.encoder = TransformerEncoder(
            config.dim, config.layers, config.heads, config.ffn_mult,
            identity_residual_init=config.identity_residual_init,
        )

    def forward(self, x: Tensor, need_attn: bool = False) -> tuple[Tensor, Tensor | None]:
        """(B, T, 24, d) or (T, 24, d) -> same shape; attention is (B, 24, L, H, T, T)."""
        unbatched = x.dim() == 3
        if unbatched:
            x = x[None]
        b, t, n, d = x.shape
        seq = rearrange(x, "b t n d -> (b n) t d")
        seq = seq + interpolate_embedding(self.temporal_embedding, t)
        out, attns = self.encoder(seq, need_attn)
        out = rearrange(out, "(b n) t d -> b t n d", b=b)
        attn = None
        if need_attn:
            attn = torch.stack([rearrange(a, "(b n) h t1 t2 -> b n h t1 t2", b=b) for a in attns], dim=2)
        if unbatched:
            out = out[0]
            attn = attn[0] if attn is not None else None
        return out, attn


class WholePoseTemporal(nn.Module):
    """Baseline: one temporal sequence of concatenated, narrowed joint tokens.

    Each joint slot owns its d -> d/24 and d/24 -> d projections, so joint
    permutation equivariance intentionally does not hold.
    """

    def __init__(self, config: TemporalConfig):
        super().__init__()
        if config.mode != "whole_pose":
            raise ValueError("config.mode must be 'whole_pose'")
        self.config = config
        d = config.dim
        piece = d // NUM_JOINTS
        scale = d ** -0.5
        self.down_weight = nn.Parameter(torch.randn(NUM_JOINTS, d, piece).double() * scale)
        self.down_bias = nn.Parameter(torch.zeros(NUM_JOINTS, piece).double())
        self.up_weight = nn.Parameter(torch.randn(NUM_JOINTS, piece, d).double() * piece**-0.5)
        self.up_bias = nn.Parameter(torch.zeros(NUM_JOINTS, d).double())
        self.temporal_embedding = nn.Parameter(torch.randn(config.base_len, d).double() * 0.02)
        self.encoder = TransformerEncoder(
            d, config.layers, config.heads, config.ffn_mult,
            identity_residual_init=config.identity_residual_init,
        )

    def forward(self, x: Tensor, need_attn: bool = False) -> tuple[Tensor, Tensor | None]:
        """(B, T, 24, d) or (T, 24, d) -> same shape; attention is (B, L, H, T, T)."""
        unbatched = x.dim() == 3
        if unbatched:
            x = x[None]
        b, t, n, d = x.shape
        pieces = torch.einsum("btnd,ndp->btnp", x, self.down_weight) + self.down_bias
        pose = pieces.reshape(b, t, d)
        pose = pose + interpolate_embedding(self.temporal_embedding, t)
        out, attns = self.encoder(pose, need_attn)
        pieces = out.reshape(b, t, n, d // NUM_JOINTS)
        tokens = torch.einsum("btnp,npd->btnd", pieces, self.up_weight) + self.up_bias
        attn = torch.stack(attns, dim=1) if need_attn else None
        if unbatched:
            tokens = tokens[0]
            attn = attn[0] if attn is not None else None
        return tokens, attn


def video_predict(
    frames: Tensor,
    base: BaseModel,
    temporal: nn.Module | None,
    body: BodyModelSpec,
) -> tuple[SmplEstimate, MeshOutput, Tensor]:
    """Per-frame base model, temporal mixing of joint tokens, shared heads.

    frames is (B, T, C, H, W) or (T, C, H, W). Shape and camera tokens skip
    the temporal model entirely. temporal=None gives the image-only mode.
    Returns per-frame estimates, meshes and projected 2D joints.
    """
    unbatched = frames.dim() == 4
    if unbatched:
        frames = frames[None]
    b, t = frames.shape[:2]
    tok, _ = base.forward_tokens(frames.reshape(b * t, *frames.shape[2:]))
    joint = tok.joint.reshape(b, t, NUM_JOINTS, -1)
    if temporal is not None:
        joint, _ = temporal(joint)
    seq_tok = TokenOutputs(
        joint=joint,
        shape=tok.shape.reshape(b, t, -1),
        camera=tok.camera.reshape(b, t, -1),
    )
    est = base.decode(seq_tok)
    mesh = bm.forward(body, est.theta, est.beta)
    j3d = bm.regress_joints(body, mesh.vertices)
    j2d = bm.project(j3d, est.cam)
    if unbatched:
        est = SmplEstimate(theta=est.theta[0], beta=est.beta[0], cam=type(est.cam)(s=est.cam.s[0], t=est.cam.t[0]))
        mesh = MeshOutput(vertices=mesh.vertices[0], joints=mesh.joints[0])
        j2d = j2d[0]
    return est, mesh, j2d
