"""Procedurally generated differentiable body model.

A small SMPL-like parametric body: linear shape blendshapes on a vertex
template, forward kinematics over a fixed 24-joint tree, linear blend
skinning, a row-stochastic joint regressor, and a weak-perspective camera.
The geometry is deterministic per seed, so no licensed asset files are
needed and ground truth is exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from tokmesh.archive import load_archive, save_archive
from tokmesh.rotations import axis_angle_to_matrix

NUM_JOINTS = 24
NUM_BETAS = 10
THETA_DIM = NUM_JOINTS * 3

# Standard 24-joint kinematic tree (pelvis-rooted, -1 marks the root).
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

# Rest skeleton of a ~1.6-unit humanoid in a T pose, y up, +x to its left.
_REST_JOINTS = np.array(
    [
        [0.00, 0.00, 0.00],    # pelvis
        [0.09, -0.08, 0.00],   # left hip
        [-0.09, -0.08, 0.00],  # right hip
        [0.00, 0.11, 0.00],    # lower spine
        [0.10, -0.48, 0.00],   # left knee
        [-0.10, -0.48, 0.00],  # right knee
        [0.00, 0.23, 0.00],    # mid spine
        [0.11, -0.87, 0.00],   # left ankle
        [-0.11, -0.87, 0.00],  # right ankle
        [0.00, 0.29, 0.00],    # upper spine
        [0.12, -0.93, 0.12],   # left foot
        [-0.12, -0.93, 0.12],  # right foot
        [0.00, 0.48, 0.00],    # neck
        [0.07, 0.42, 0.00],    # left collar
        [-0.07, 0.42, 0.00],   # right collar
        [0.00, 0.62, 0.00],    # head
        [0.17, 0.44, 0.00],    # left shoulder
        [-0.17, 0.44, 0.00],   # right shoulder
        [0.43, 0.44, 0.00],    # left elbow
        [-0.43, 0.44, 0.00],   # right elbow
        [0.68, 0.44, 0.00],    # left wrist
        [-0.68, 0.44, 0.00],   # right wrist
        [0.77, 0.44, 0.00],    # left hand
        [-0.77, 0.44, 0.00],   # right hand
    ],
    dtype=np.float64,
)

_ROW_SUM_TOL = 1e-6


@dataclass
class CameraParams:
    """Weak-perspective camera: uniform scale s > 0 and in-plane translation t."""

    s: Tensor
    t: Tensor

    def __post_init__(self) -> None:
        self.s = torch.as_tensor(self.s)
        self.t = torch.as_tensor(self.t)
        if self.t.shape[-1] != 2:
            raise ValueError(f"camera translation must end in dim 2, got {tuple(self.t.shape)}")
        if bool((self.s <= 0).any()):
            raise ValueError("camera scale must be positive")


@dataclass
class MeshOutput:
    """Posed surface vertices (..., V, 3) and kinematic joint locations (..., 24, 3)."""

    vertices: Tensor
    joints: Tensor


@dataclass
class BodyModelSpec:
    """Immutable geometry of one procedurally built body.

    skin_weights and joint_regressor rows are nonnegative and sum to 1;
    parents[0] == -1 and parents[j] < j for j > 0 (a tree in topological order).
    """

    template: Tensor        # (V, 3)
    shape_dirs: Tensor      # (V, 3, 10)
    skin_weights: Tensor    # (V, 24)
    joint_regressor: Tensor  # (24, V)
    parents: Tensor         # (24,) long
    seed: int = 0

    def __post_init__(self) -> None:
        v = self.template.shape[0]
        if v < NUM_JOINTS:
            raise ValueError(f"need at least {NUM_JOINTS} vertices, got {v}")
        expected = {
            "template": (v, 3),
            "shape_dirs": (v, 3, NUM_BETAS),
            "skin_weights": (v, NUM_JOINTS),
            "joint_regressor": (NUM_JOINTS, v),
            "parents": (NUM_JOINTS,),
        }
        for name, shape in expected.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {got}")
        for name in ("skin_weights", "joint_regressor"):
            mat = getattr(self, name)
            if bool((mat < 0).any()):
                raise ValueError(f"{name} has negative entries")
            row_err = (mat.sum(dim=-1) - 1.0).abs().max()
            if float(row_err) > _ROW_SUM_TOL:
                raise ValueError(f"{name} rows must sum to 1 (max error {float(row_err):.2e})")
        p = self.parents.tolist()
        if p[0] != -1 or any(not 0 <= p[j] < j for j in range(1, NUM_JOINTS)):
            raise ValueError("parents must form a tree rooted at joint 0 in topological order")

    @property
    def num_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def rest_joints(self) -> Tensor:
        return self.joint_regressor @ self.template

    def bones(self) -> list[tuple[int, int]]:
        """(parent, child) pairs, one per non-root joint."""
        return [(int(self.parents[j]), j) for j in range(1, NUM_JOINTS)]


def _segment_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distances (P, S) from each point to each segment."""
    d = ends - starts  # (S, 3)
    rel = points[:, None, :] - starts[None, :, :]  # (P, S, 3)
    denom = np.maximum((d * d).sum(-1), 1e-12)
    t = np.clip((rel * d[None]).sum(-1) / denom, 0.0, 1.0)
    nearest = starts[None] + t[..., None] * d[None]
    return np.linalg.norm(points[:, None, :] - nearest, axis=-1)


def build_mini_model(seed: int, num_vertices: int = 200) -> BodyModelSpec:
    """Build a deterministic body: vertices on bone capsules of the rest skeleton,
    inverse-distance skinning to the two nearest bones, joint regressor rows on
    the vertices nearest each joint, and a small random shape basis.
    """
    if num_vertices < NUM_JOINTS:
        raise ValueError(f"num_vertices must be >= {NUM_JOINTS}, got {num_vertices}")
    rng = np.random.default_rng(seed)
    parents = np.array(PARENTS)
    bones = [(parents[j], j) for j in range(1, NUM_JOINTS)]
    starts = _REST_JOINTS[[p for p, _ in bones]]
    ends = _REST_JOINTS[[c for _, c in bones]]

    bone_idx = np.arange(num_vertices) % len(bones)
    along = rng.uniform(0.05, 0.95, size=num_vertices)
    template = starts[bone_idx] + along[:, None] * (ends[bone_idx] - starts[bone_idx])
    template = template + rng.normal(0.0, 0.035, size=(num_vertices, 3))

    # Skinning: each bone segment moves with its parent-side joint.
    seg_joint = np.array([p for p, _ in bones])
    dist = _segment_distances(template, starts, ends)  # (V, 23)
    order = np.argsort(dist, axis=1)[:, :2]
    skin = np.zeros((num_vertices, NUM_JOINTS))
    for v in range(num_vertices):
        for s in order[v]:
            skin[v, seg_joint[s]] += 1.0 / (dist[v, s] + 1e-3)
    skin /= skin.sum(axis=1, keepdims=True)

    # Joint regressor: inverse-distance weights on the 6 vertices nearest each joint.
    regressor = np.zeros((NUM_JOINTS, num_vertices))
    d_jv = np.linalg.norm(_REST_JOINTS[:, None, :] - template[None, :, :], axis=-1)
    for j in range(NUM_JOINTS):
        nearest = np.argsort(d_jv[j])[:6]
        w = 1.0 / (d_jv[j, nearest] + 1e-3)
        regressor[j, nearest] = w / w.sum()

    shape_dirs = rng.normal(0.0, 0.02, size=(num_vertices, 3, NUM_BETAS))

    return BodyModelSpec(
        template=torch.from_numpy(template),
        shape_dirs=torch.from_numpy(shape_dirs),
        skin_weights=torch.from_numpy(skin),
        joint_regressor=torch.from_numpy(regressor),
        parents=torch.from_numpy(parents),
        seed=seed,
    )


def _forward_kinematics(rot: Tensor, rest_joints: Tensor, parents: Tensor) -> tuple[Tensor, Tensor]:
    """World rotations (..., 24, 3, 3) and joint positions (..., 24, 3)."""
    world_rot = [rot[..., 0, :, :]]
    world_pos = [rest_joints[..., 0, :]]
    for j in range(1, NUM_JOINTS):
        p = int(parents[j])
        offset = rest_joints[..., j, :] - rest_joints[..., p, :]
        world_rot.append(world_rot[p] @ rot[..., j, :, :])
        world_pos.append((world_rot[p] @ offset[..., None]).squeeze(-1) + world_pos[p])
    return torch.stack(world_rot, dim=-3), torch.stack(world_pos, dim=-2)


def forward(spec: BodyModelSpec, theta: Tensor, beta: Tensor) -> MeshOutput:
    """Pose and shape the body.

    theta is (..., 72): 24 axis-angle blocks, block 0 the global rotation,
    the rest rotations relative to the parent joint. beta is (..., 10).
    Shaped template -> regressed rest joints -> forward kinematics ->
    linear blend skinning.
    """
    if theta.shape[-1] != THETA_DIM:
        raise ValueError(f"theta must end in dim {THETA_DIM}, got {tuple(theta.shape)}")
    if beta.shape[-1] != NUM_BETAS:
        raise ValueError(f"beta must end in dim {NUM_BETAS}, got {tuple(beta.shape)}")
    shaped = spec.template + torch.einsum("vcb,...b->...vc", spec.shape_dirs, beta)
    rest_joints = torch.einsum("jv,...vc->...jc", spec.joint_regressor, shaped)
    rot = axis_angle_to_matrix(theta.reshape(*theta.shape[:-1], NUM_JOINTS, 3))
    world_rot, world_pos = _forward_kinematics(rot, rest_joints, spec.parents)
    # Skinning transform per joint: x -> R_w (x - rest) + pos.
    trans = world_pos - (world_rot @ rest_joints[..., None]).squeeze(-1)
    vrot = torch.einsum("vj,...jrc->...vrc", spec.skin_weights, world_rot)
    vtrans = torch.einsum("vj,...jc->...vc", spec.skin_weights, trans)
    vertices = (vrot @ shaped[..., None]).squeeze(-1) + vtrans
    return MeshOutput(vertices=vertices, joints=world_pos)


def regress_joints(spec: BodyModelSpec, vertices: Tensor) -> Tensor:
    """Joint locations (..., 24, 3) as the row-stochastic regression of vertices."""
    if vertices.shape[-2:] != (spec.num_vertices, 3):
        raise ValueError(
            f"vertices must be (..., {spec.num_vertices}, 3), got {tuple(vertices.shape)}"
        )
    return torch.einsum("jv,...vc->...jc", spec.joint_regressor, vertices)


def project(j3d: Tensor, cam: CameraParams) -> Tensor:
    """Weak-perspective projection: drop z, scale by s, translate by t.

    The global rotation is already applied by forward kinematics (pose
    block 0), so no extra rotation happens here.
    """
    return cam.s[..., None, None] * j3d[..., :2] + cam.t[..., None, :]


def save_body_spec(spec: BodyModelSpec, path: str | Path) -> None:
    save_archive(
        path,
        {
            "template": spec.template.numpy(),
            "shape_dirs": spec.shape_dirs.numpy(),
            "skin_weights": spec.skin_weights.numpy(),
            "joint_regressor": spec.joint_regressor.numpy(),
            "parents": spec.parents.numpy(),
        },
        meta={"kind": "body_spec", "seed": spec.seed},
    )


def load_body_spec(path: str | Path) -> BodyModelSpec:
    ar = load_archive(path)
    return BodyModelSpec(
        template=torch.from_numpy(ar["template"]),
        shape_dirs=torch.from_numpy(ar["shape_dirs"]),
        skin_weights=torch.from_numpy(ar["skin_weights"]),
        joint_regressor=torch.from_numpy(ar["joint_regressor"]),
        parents=torch.from_numpy(ar["parents"]),
        seed=int(ar.meta.get("seed", 0)),
    )
