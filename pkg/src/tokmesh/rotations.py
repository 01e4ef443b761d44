"""Conversions among axis-angle, rotation-matrix and 6D rotation representations.

All functions are pure, batched over arbitrary leading dimensions, and
differentiable away from the representation singularities. The 6D layout is
column-major: the first three components are column 0 of the rotation
matrix, the last three are column 1.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor

# Below this angle (radians) Rodrigues factors switch to their Taylor forms.
TAYLOR_ANGLE = 1e-8
# Angles closer to pi than this use the symmetric-part axis extraction.
_PI_BRANCH_MARGIN = 5e-3
_ORTHONORMALITY_TOL = 1e-4


class InvalidRotationError(ValueError):
    """Input matrix is not a rotation (orthonormality or determinant check failed)."""


class DegenerateRotationError(ValueError):
    """6D input cannot be orthonormalized (zero or parallel columns)."""


def skew(v: Tensor) -> Tensor:
    """Skew-symmetric matrix K with K @ x = v cross x, batched over leading dims."""
    zero = torch.zeros_like(v[..., 0])
    rows = [
        torch.stack([zero, -v[..., 2], v[..., 1]], dim=-1),
        torch.stack([v[..., 2], zero, -v[..., 0]], dim=-1),
        torch.stack([-v[..., 1], v[..., 0], zero], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def axis_angle_to_matrix(v: Tensor) -> Tensor:
    """Rodrigues formula, (..., 3) axis-angle to (..., 3, 3) rotation matrix.

    Total function: angles below TAYLOR_ANGLE take a second-order Taylor
    expansion of the sin/cos factors, so the map (and its gradient) is
    well defined at v = 0.
    """
    angle_sq = (v * v).sum(dim=-1)
    small = angle_sq < TAYLOR_ANGLE**2
    # Unselected branch must stay finite for autograd: substitute a safe angle.
    angle = torch.sqrt(torch.where(small, torch.ones_like(angle_sq), angle_sq))
    sin_factor = torch.where(small, 1.0 - angle_sq / 6.0, torch.sin(angle) / angle)
    cos_factor = torch.where(small, 0.5 - angle_sq / 24.0, (1.0 - torch.cos(angle)) / angle_sq.clamp(min=1e-32))
    k = skew(v)
    eye = torch.eye(3, dtype=v.dtype, device=v.device).expand(k.shape)
    return eye + sin_factor[..., None, None] * k + cos_factor[..., None, None] * (k @ k)


def _check_rotation(m: Tensor) -> None:
    if m.shape[-2:] != (3, 3):
        raise InvalidRotationError(f"expected (..., 3, 3) matrix, got {tuple(m.shape)}")
    eye = torch.eye(3, dtype=m.dtype, device=m.device)
    residual = torch.linalg.matrix_norm(m.transpose(-1, -2) @ m - eye)
    if bool((residual > _ORTHONORMALITY_TOL).any()):
        raise InvalidRotationError(f"orthonormality residual {float(residual.max()):.3e} exceeds {_ORTHONORMALITY_TOL:.0e}")
    if bool((torch.linalg.det(m) <= 0).any()):
        raise InvalidRotationError("matrix has non-positive determinant (reflection or degenerate)")


def matrix_to_axis_angle(m: Tensor) -> Tensor:
    """(..., 3, 3) rotation matrix to (..., 3) axis-angle with angle in [0, pi].

    Rejects non-orthonormal input. The angle comes from atan2 of the
    skew/symmetric decomposition; the branch near pi recovers the axis from
    the largest diagonal element of the outer-product part, which stays
    well conditioned where the skew part vanishes.
    """
    _check_rotation(m)
    trace = m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2]
    cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0)
    skew_vec = 0.5 * torch.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        dim=-1,
    )
    # Tiny bias keeps the norm gradient finite at the identity.
    sin = torch.sqrt((skew_vec * skew_vec).sum(dim=-1) + 1e-300)
    angle = torch.atan2(sin, cos)

    near_pi = angle > math.pi - _PI_BRANCH_MARGIN
    small = angle < 1e-4

    # Generic branch: v = skew_vec * angle / sin(angle), Taylor for small angles.
    factor_taylor = 1.0 + angle * angle / 6.0 + (7.0 / 360.0) * angle**4
    factor_generic = angle / sin.clamp(min=1e-8)
    v_generic = skew_vec * torch.where(small, factor_taylor, factor_generic)[..., None]

    # Near pi: (m + m^T)/2 - cos*I = (1 - cos) * outer(axis, axis).
    sym = 0.5 * (m + m.transpose(-1, -2))
    eye = torch.eye(3, dtype=m.dtype, device=m.device).expand(m.shape)
    outer = (sym - cos[..., None, None] * eye) / (1.0 - cos).clamp(min=1e-3)[..., None, None]
    diag = torch.diagonal(outer, dim1=-2, dim2=-1)
    k = diag.argmax(dim=-1)
    col = torch.take_along_dim(outer, k[..., None, None].expand(*outer.shape[:-2], 3, 1), dim=-1).squeeze(-1)
    pivot = torch.take_along_dim(diag, k[..., None], dim=-1).squeeze(-1)
    axis = col / torch.sqrt(pivot.clamp(min=1e-6))[..., None]
    # Orient the axis with the (possibly tiny) skew part; at exactly pi the sign is arbitrary.
    flip = (axis * skew_vec).sum(dim=-1) < 0
    axis = torch.where(flip[..., None], -axis, axis)
    v_pi = axis * angle[..., None]

    return torch.where(near_pi[..., None], v_pi, v_generic)


def sixd_to_matrix(r6: Tensor) -> Tensor:
    """Gram-Schmidt decode of a (..., 6) vector into a (..., 3, 3) rotation.

    b1 = normalize(c1), b2 = normalize(c2 - (b1.c2) b1), b3 = b1 x b2;
    the result has columns (b1, b2, b3). Invariant under positive scaling
    of the input. Raises DegenerateRotationError when either normalization
    divides by (numerically) zero.
    """
    if r6.shape[-1] != 6:
        raise ValueError(f"expected (..., 6) input, got {tuple(r6.shape)}")
    c1 = r6[..., 0:3]
    c2 = r6[..., 3:6]
    n1 = torch.linalg.vector_norm(c1, dim=-1, keepdim=True)
    if bool((n1 < 1e-8).any()):
        raise DegenerateRotationError("first 6D column has near-zero norm")
    b1 = c1 / n1
    u2 = c2 - (b1 * c2).sum(dim=-1, keepdim=True) * b1
    n2 = torch.linalg.vector_norm(u2, dim=-1, keepdim=True)
    if bool((n2 < 1e-8).any()):
        raise DegenerateRotationError("second 6D column is (near-)parallel to the first")
    b2 = u2 / n2
    b3 = torch.linalg.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def matrix_to_sixd(m: Tensor) -> Tensor:
    """(..., 3, 3) rotation matrix to its first two columns as a (..., 6) vector."""
    return torch.cat([m[..., :, 0], m[..., :, 1]], dim=-1)
