"""Single-frame estimator: patch embedding, prior tokens, encoder, linear heads.

The image is split into non-overlapping patches and linearly embedded (an
optional two-layer conv stem can pre-process the pixels). 24 joint-rotation
tokens, one shape token and one camera token are appended; only the image
tokens receive a learnable position embedding. A pre-norm transformer
encoder updates the whole sequence and three linear heads decode the final
prior-token rows into pose (via the 6D representation), shape coefficients
and a weak-perspective camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import Tensor, nn

from tokmesh import body_model as bm
from tokmesh.body_model import BodyModelSpec, CameraParams, MeshOutput
from tokmesh.rotations import matrix_to_axis_angle, sixd_to_matrix
from tokmesh.transformer import TransformerEncoder

NUM_JOINT_TOKENS = 24
NUM_PRIOR_TOKENS = NUM_JOINT_TOKENS + 2  # + shape + camera

# Decodes to the identity rotation; used to initialize the rotation-head bias
# so an untrained model starts near the rest pose.
IDENTITY_SIXD = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


@dataclass
class ModelConfig:
    """Encoder geometry. Desk defaults; `paper_scale` gives the full-size variant."""

    dim: int = 48
    layers: int = 2
    heads: int = 4
    ffn_mult: int = 4
    patch: int = 8
    channels: int = 3
    height: int = 64
    width: int = 64
    conv_stem: bool = False

    def __post_init__(self) -> None:
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(f"image {self.height}x{self.width} not divisible by patch {self.patch}")

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @classmethod
    def paper_scale(cls) -> "ModelConfig":
        return cls(dim=768, layers=6, heads=12, ffn_mult=4, patch=16, channels=3, height=224, width=224)


@dataclass
class TokenOutputs:
    """Final-layer prior-token rows: joint (..., 24, d), shape (..., d), camera (..., d)."""

    joint: Tensor
    shape: Tensor
    camera: Tensor


@dataclass
class SmplEstimate:
    """Decoded body parameters: theta (..., 72), beta (..., 10) and the camera."""

    theta: Tensor
    beta: Tensor
    cam: CameraParams


class BaseModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c, p, d = config.channels, config.patch, config.dim
        if config.conv_stem:
            self.stem = nn.Sequential(
                nn.Conv2d(c, 16, kernel_size=3, padding=1),
                nn.GELU(),
                nn.Conv2d(16, c, kernel_size=3, padding=1),
            )
        else:
            self.stem = None
        self.patch_proj = nn.Linear(c * p * p, d)
        self.pos_embed = nn.Parameter(torch.randn(config.num_patches, d) * 0.02)
        self.joint_tokens = nn.Parameter(torch.randn(NUM_JOINT_TOKENS, d) * 0.02)
        self.shape_token = nn.Parameter(torch.randn(d) * 0.02)
        self.camera_token = nn.Parameter(torch.randn(d) * 0.02)
        self.encoder = TransformerEncoder(d, config.layers, config.heads, config.ffn_mult)
        self.rotation_head = nn.Linear(d, 6)
        self.shape_head = nn.Linear(d, bm.NUM_BETAS)
        self.camera_head = nn.Linear(d, 3)
        with torch.no_grad():
            self.rotation_head.bias.copy_(torch.tensor(IDENTITY_SIXD))
            self.shape_head.bias.zero_()
            self.camera_head.bias.zero_()
        self.double()

    def patch_embed(self, images: Tensor) -> Tensor:
        """(B, C, H, W) -> (B, S, d) of linearly embedded non-overlapping patches."""
        cfg = self.config
        expected = (cfg.channels, cfg.height, cfg.width)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise ValueError(f"expected images (B, {expected[0]}, {expected[1]}, {expected[2]}), got {tuple(images.shape)}")
        if self.stem is not None:
            images = self.stem(images)
        patches = rearrange(images, "b c (h p1) (w p2) -> b (h w) (p1 p2 c)", p1=cfg.patch, p2=cfg.patch)
        return self.patch_proj(patches)

    def assemble(self, patches: Tensor) -> Tensor:
        """Add the position embedding to the image tokens and append the 26 prior
        tokens unchanged, in the order image, joints, shape, camera."""
        b = patches.shape[0]
        x = patches + self.pos_embed
        priors = torch.cat([self.joint_tokens, self.shape_token[None], self.camera_token[None]], dim=0)
        return torch.cat([x, priors.expand(b, -1, -1)], dim=1)

    def encode(self, seq: Tensor, need_attn: bool = False) -> tuple[Tensor, list[Tensor] | None]:
        return self.encoder(seq, need_attn)

    def forward_tokens(self, images: Tensor, need_attn: bool = False) -> tuple[TokenOutputs, list[Tensor] | None]:
        seq, attns = self.encode(self.assemble(self.patch_embed(images)), need_attn)
        s = self.config.num_patches
        tok = TokenOutputs(
            joint=seq[:, s : s + NUM_JOINT_TOKENS],
            shape=seq[:, s + NUM_JOINT_TOKENS],
            camera=seq[:, s + NUM_JOINT_TOKENS + 1],
        )
        return tok, attns

    def decode_theta(self, joint_out: Tensor) -> Tensor:
        """(..., 24, d) joint tokens -> (..., 72) axis-angle pose via 6D rotations."""
        r6 = self.rotation_head(joint_out)
        aa = matrix_to_axis_angle(sixd_to_matrix(r6))
        return aa.reshape(*aa.shape[:-2], bm.THETA_DIM)

    def decode_camera(self, camera_out: Tensor) -> CameraParams:
        """(..., d) camera token -> scale (softplus keeps it positive) and translation."""
        raw = self.camera_head(camera_out)
        return CameraParams(s=F.softplus(raw[..., 0]), t=raw[..., 1:3])

    def decode(self, tok: TokenOutputs) -> SmplEstimate:
        return SmplEstimate(
            theta=self.decode_theta(tok.joint),
            beta=self.shape_head(tok.shape),
            cam=self.decode_camera(tok.camera),
        )

    def forward(self, images: Tensor) -> SmplEstimate:
        tok, _ = self.forward_tokens(images)
        return self.decode(tok)

    def predict(self, images: Tensor, body: BodyModelSpec) -> tuple[SmplEstimate, MeshOutput, Tensor]:
        """Full single-frame pipeline: estimate, posed mesh, projected 2D joints."""
        est = self(images)
        mesh = bm.forward(body, est.theta, est.beta)
        j3d = bm.regress_joints(body, mesh.vertices)
        return est, mesh, bm.project(j3d, est.cam)

    def prior_estimate(self, body: BodyModelSpec) -> tuple[SmplEstimate, MeshOutput]:
        """Decode the prior tokens directly, with no image and no encoder.

        Shows what pose/shape the learnable tokens encode on their own; with
        freshly initialized heads this is (near) the rest pose.
        """
        tok = TokenOutputs(joint=self.joint_tokens, shape=self.shape_token, camera=self.camera_token)
        est = self.decode(tok)
        mesh = bm.forward(body, est.theta, est.beta)
        return est, mesh
