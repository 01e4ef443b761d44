"""Evaluation metrics: MPJPE, PA-MPJPE, PVE and acceleration error.

All inputs are numpy arrays in model units; unit conversion (mm, fps) is the
harness's job. Joint sequences are (T, J, 3); a single frame (J, 3) is
promoted. MPJPE and PVE align translation only (at the root), PA-MPJPE
applies a full per-frame similarity alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SimilarityTransform:
    """p -> scale * rot @ p + trans, with rot a proper rotation."""

    scale: float
    rot: np.ndarray  # (3, 3)
    trans: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rot.T + self.trans


def procrustes_align(p: np.ndarray, q: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity transform taking point set p onto q.

    Minimizes sum_i ||s R p_i + t - q_i||^2 by centering both sets and taking
    the SVD of their cross-covariance, with the determinant-sign correction
    that forbids reflections. Raises on degenerate (zero-variance) p.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        raise ValueError(f"need matching (N>=3, 3) point sets, got {p.shape} and {q.shape}")
    mu_p = p.mean(axis=0)
    mu_q = q.mean(axis=0)
    x = p - mu_p
    y = q - mu_q
    var_p = (x**2).sum() / len(p)
    if var_p < 1e-12:
        raise ValueError("degenerate source points: zero variance")
    cov = y.T @ x / len(p)
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = float((s * d).sum() / var_p)
    trans = mu_q - scale * rot @ mu_p
    return SimilarityTransform(scale=scale, rot=rot, trans=trans)


def _as_seq(j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=np.float64)
    if j.ndim == 2:
        j = j[None]
    if j.ndim != 3 or j.shape[-1] != 3:
        raise ValueError(f"expected (T, J, 3) joints, got {j.shape}")
    return j


def mpjpe(pred: np.ndarray, gt: np.ndarray, root: int = 0) -> float:
    """Mean per-joint distance after per-frame root-joint translation alignment."""
    pred, gt = _as_seq(pred), _as_seq(gt)
    aligned = pred - pred[:, root : root + 1] + gt[:, root : root + 1]
    return float(np.linalg.norm(aligned - gt, axis=-1).mean())


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-joint distance after per-frame Procrustes similarity alignment."""
    pred, gt = _as_seq(pred), _as_seq(gt)
    errors = []
    for p_frame, g_frame in zip(pred, gt):
        aligned = procrustes_align(p_frame, g_frame).apply(p_frame)
        errors.append(np.linalg.norm(aligned - g_frame, axis=-1).mean())
    return float(np.mean(errors))


def pve(pred_vertices: np.ndarray, gt_vertices: np.ndarray, root_regressor: np.ndarray | None = None) -> float:
    """Mean per-vertex distance, root-aligned like MPJPE.

    root_regressor is a (V,) row of the joint regressor giving the root joint;
    without it no alignment is applied.
    """
    pred = _as_seq(pred_vertices)
    gt = _as_seq(gt_vertices)
    if root_regressor is not None:
        w = np.asarray(root_regressor, dtype=np.float64)
        pred_root = np.einsum("v,tvc->tc", w, pred)[:, None]
        gt_root = np.einsum("v,tvc->tc", w, gt)[:, None]
        pred = pred - pred_root + gt_root
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def accel_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean norm of the difference of second temporal differences, per joint.

    Units are length per frame^2; needs at least three frames.
    """
    pred, gt = _as_seq(pred), _as_seq(gt)
    if pred.shape[0] < 3:
        raise ValueError(f"acceleration error needs T >= 3 frames, got {pred.shape[0]}")
    a_pred = pred[2:] - 2.0 * pred[1:-1] + pred[:-2]
    a_gt = gt[2:] - 2.0 * gt[1:-1] + gt[:-2]
    return float(np.linalg.norm(a_pred - a_gt, axis=-1).mean())
