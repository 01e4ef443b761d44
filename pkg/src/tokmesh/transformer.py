"""Pre-normalization transformer encoder shared by the image and temporal models."""

from __future__ import annotations

import torch
from torch import Tensor, nn


class SelfAttention(nn.Module):
    """Multi-head bidirectional self-attention with optional attention export."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: Tensor, need_attn: bool = False) -> tuple[Tensor, Tensor | None]:
        b, n, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q, k, v = (t.view(b, n, self.heads, -1).transpose(1, 2) for t in (q, k, v))
        attn = torch.softmax(q @ k.transpose(-1, -2) * self.scale, dim=-1)  # (b, h, n, n)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out), attn if need_attn else None


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, dim * ffn_mult), nn.GELU(), nn.Linear(dim * ffn_mult, dim))

    def forward(self, x: Tensor, need_attn: bool = False) -> tuple[Tensor, Tensor | None]:
        delta, attn = self.attn(self.norm1(x), need_attn)
        x = x + delta
        x = x + self.ffn(self.norm2(x))
        return x, attn


class TransformerEncoder(nn.Module):
    """Stack of pre-norm blocks. No trailing LayerNorm, so zeroing the residual
    output projections turns the whole stack into the identity map."""

    def __init__(self, dim: int, layers: int, heads: int, ffn_mult: int = 4, identity_residual_init: bool = False):
        super().__init__()
        self.blocks = nn.ModuleList(EncoderBlock(dim, heads, ffn_mult) for _ in range(layers))
        self.double()
        if identity_residual_init:
            self.zero_residual_paths()

    def zero_residual_paths(self) -> None:
        """Zero every block's output projections; the encoder becomes the identity."""
        with torch.no_grad():
            for block in self.blocks:
                block.attn.proj.weight.zero_()
                block.attn.proj.bias.zero_()
                block.ffn[-1].weight.zero_()
                block.ffn[-1].bias.zero_()

    def forward(self, x: Tensor, need_attn: bool = False) -> tuple[Tensor, list[Tensor] | None]:
        attns = [] if need_attn else None
        for block in self.blocks:
            x, attn = block(x, need_attn)
            if need_attn:
                attns.append(attn)
        return x, attns
