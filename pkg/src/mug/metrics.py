"""Evaluation metrics: MPJPE / MPVPE / PA-MPJPE / 3DPCK on root-relative
geometry, ordinal depth accuracy across humans, and greedy prediction-to-GT
matching in the 2D canonical frame.

All positional metrics take millimeters and return millimeters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "mpjpe",
    "mpvpe",
    "pa_mpjpe",
    "procrustes_align",
    "pck3d",
    "ordinal_depth_accuracy",
    "match_humans",
    "EvalReport",
    "PCK_THRESHOLD_MM",
    "MATCH_GATE_CANONICAL_PX",
]

PCK_THRESHOLD_MM = 150.0
MATCH_GATE_CANONICAL_PX = 250.0
GT_TIE_EPS = 1e-6
PRED_TIE_EPS = 1e-3


def _mean_dist(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def mpjpe(pred_joints, gt_joints) -> float:
    """Mean per-joint position error over root-relative joints."""
    return _mean_dist(pred_joints, gt_joints)


def mpvpe(pred_mesh, gt_mesh) -> float:
    """Mean per-vertex position error over root-relative meshes."""
    return _mean_dist(pred_mesh, gt_mesh)


def procrustes_align(pred, gt):
    """Similarity transform (s, R, t) minimizing ||s R pred + t - gt||.

    Reflections are disallowed (det R = +1). If the prediction is degenerate
    (near-zero spread), falls back to translation only with a warning.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    xp, xg = pred - mu_p, gt - mu_g
    var_p = (xp**2).sum()
    if var_p < 1e-12:
        warnings.warn("degenerate point set in Procrustes; translation-only fallback", stacklevel=2)
        return 1.0, np.eye(pred.shape[1]), mu_g - mu_p
    u, s, vt = np.linalg.svd(xg.T @ xp)
    d = np.ones(len(s))
    if np.linalg.det(u @ vt) < 0:
        d[-1] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = (s * d).sum() / var_p
    trans = mu_g - scale * rot @ mu_p
    return scale, rot, trans


def pa_mpjpe(pred_joints, gt_joints) -> float:
    """MPJPE after optimal similarity (Procrustes) alignment."""
    pred = np.asarray(pred_joints, dtype=np.float64)
    gt = np.asarray(gt_joints, dtype=np.float64)
    scale, rot, trans = procrustes_align(pred, gt)
    aligned = scale * pred @ rot.T + trans
    return _mean_dist(aligned, gt)


def pck3d(pred_joints, gt_joints, threshold: float = PCK_THRESHOLD_MM) -> float:
    """Fraction of joints within `threshold` mm of ground truth."""
    pred = np.asarray(pred_joints, dtype=np.float64)
    gt = np.asarray(gt_joints, dtype=np.float64)
    d = np.linalg.norm(pred - gt, axis=-1)
    return float((d <= threshold).mean())


def ordinal_depth_accuracy(pred_depths, gt_depths) -> float:
    """Fraction of human pairs whose depth ordering matches ground truth.

    A GT pair closer than 1e-6 counts as a tie; a tie is predicted correctly
    when the predicted gap is below 1e-3. Returns 1.0 for K < 2.
    """
    pred = np.asarray(pred_depths, dtype=np.float64).ravel()
    gt = np.asarray(gt_depths, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise ValueError("depth arrays must match in length")
    k = len(gt)
    if k < 2:
        return 1.0
    ia, ib = np.triu_indices(k, 1)
    dg = gt[ia] - gt[ib]
    dp = pred[ia] - pred[ib]
    ties = np.abs(dg) < GT_TIE_EPS
    correct = np.where(ties, np.abs(dp) < PRED_TIE_EPS, np.sign(dp) == np.sign(dg))
    return float(correct.mean())


def match_humans(
    pred_roots_2d, gt_roots_2d, gate: float = MATCH_GATE_CANONICAL_PX
) -> list:
    """Greedy one-to-one matching by canonical-frame 2D root distance.

    Returns (pred index, gt index) pairs; pairs farther than `gate` canonical
    pixels stay unmatched. Globally greedy: closest remaining pair first.
    """
    pred = np.asarray(pred_roots_2d, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt_roots_2d, dtype=np.float64).reshape(-1, 2)
    if len(pred) == 0 or len(gt) == 0:
        return []
    d = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
    order = np.dstack(np.unravel_index(np.argsort(d, axis=None), d.shape))[0]
    used_p, used_g, pairs = set(), set(), []
    for pi, gi in order:
        pi, gi = int(pi), int(gi)
        if pi in used_p or gi in used_g or d[pi, gi] > gate:
            continue
        used_p.add(pi)
        used_g.add(gi)
        pairs.append((pi, gi))
    return pairs


@dataclass
class EvalReport:
    """Accumulates per-human metrics across scenes and averages them."""

    mpjpe_sum: float = 0.0
    mpvpe_sum: float = 0.0
    pa_mpjpe_sum: float = 0.0
    pck_sum: float = 0.0
    human_count: int = 0
    ordinal_correct: float = 0.0
    ordinal_pairs: int = 0
    scene_count: int = 0

    def add_human(self, pred_joints, gt_joints, pred_mesh, gt_mesh):
        self.mpjpe_sum += mpjpe(pred_joints, gt_joints)
        self.mpvpe_sum += mpvpe(pred_mesh, gt_mesh)
        self.pa_mpjpe_sum += pa_mpjpe(pred_joints, gt_joints)
        self.pck_sum += pck3d(pred_joints, gt_joints)
        self.human_count += 1

    def add_depths(self, pred_depths, gt_depths):
        k = len(np.asarray(gt_depths).ravel())
        self.scene_count += 1
        if k < 2:
            return
        n_pairs = k * (k - 1) // 2
        self.ordinal_correct += ordinal_depth_accuracy(pred_depths, gt_depths) * n_pairs
        self.ordinal_pairs += n_pairs

    def summary(self) -> dict:
        n = max(self.human_count, 1)
        return {
            "mpjpe_mm": self.mpjpe_sum / n,
            "mpvpe_mm": self.mpvpe_sum / n,
            "pa_mpjpe_mm": self.pa_mpjpe_sum / n,
            "pck3d": self.pck_sum / n,
            "depth_order_acc": (
                self.ordinal_correct / self.ordinal_pairs if self.ordinal_pairs else 1.0
            ),
            "humans": self.human_count,
            "scenes": self.scene_count,
        }
