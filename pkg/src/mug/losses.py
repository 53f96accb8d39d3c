"""Training losses: mesh/joint L1 terms, depth and relative-depth terms, and
the surface normal/edge regularizers, plus their weighted total.

All L1 terms are means over elements so the weights stay independent of K, J,
and V. The normal/edge terms follow the per-face pair sums and are divided by
the face count for the same reason. Every function accepts tape Values or
plain arrays and returns a Value, so losses are differentiable end to end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Value, absolute, as_value, sqrt

__all__ = [
    "LossWeights",
    "GroundTruth",
    "loss_mesh",
    "loss_joint",
    "loss_jm",
    "loss_depth",
    "loss_rel_depth",
    "loss_normal",
    "loss_edge",
    "total_loss",
    "compute_scene_loss",
    "LOSS_PART_NAMES",
]

LOSS_PART_NAMES = ("L_M", "L_J", "L_JM", "L_N", "L_E", "L_D", "L_rD")


@dataclass(frozen=True)
class LossWeights:
    joint: float = 1e-3
    joint_from_mesh: float = 1e-3
    normal: float = 0.1
    edge: float = 20.0
    depth: float = 1.0
    rel_depth: float = 20.0

    def __post_init__(self):
        for name in ("joint", "joint_from_mesh", "normal", "edge", "depth", "rel_depth"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")


@dataclass(frozen=True)
class GroundTruth:
    """Per-scene supervision; 3D fields in the same units as the prediction."""

    mesh: np.ndarray | None = None  # K x V x 3
    joints: np.ndarray | None = None  # K x J x 3
    depth_measures: np.ndarray | None = None  # K

    @property
    def has_mesh(self):
        return self.mesh is not None

    @property
    def has_joints(self):
        return self.joints is not None

    @property
    def has_depth(self):
        return self.depth_measures is not None


def _l1_mean(a, b) -> Value:
    return absolute(as_value(a) - as_value(b)).mean()


def loss_mesh(mesh, mesh_gt) -> Value:
    return _l1_mean(mesh, mesh_gt)


def loss_joint(joints, joints_gt) -> Value:
    return _l1_mean(joints, joints_gt)


def loss_jm(mesh, joints_gt, regressor) -> Value:
    """L1 between joints regressed from the predicted mesh and GT joints."""
    mesh = as_value(mesh)
    if mesh.data.ndim == 3:
        k, v, _ = mesh.shape
        flat = mesh.reshape(k * v, 3)
        reg = np.kron(np.eye(k), np.asarray(regressor))
        regressed = (as_value(reg) @ flat).reshape(k, -1, 3)
    else:
        regressed = as_value(np.asarray(regressor)) @ mesh
    return _l1_mean(regressed, joints_gt)


def loss_depth(depth, depth_gt) -> Value:
    return _l1_mean(depth, depth_gt)


def loss_rel_depth(depth, depth_gt) -> Value:
    """Mean absolute error of pairwise depth differences; 0 for K < 2."""
    depth = as_value(depth)
    gt = np.asarray(depth_gt, dtype=np.float64).ravel()
    k = depth.data.size
    if k < 2:
        return as_value(0.0)
    idx_m, idx_n = np.triu_indices(k, 1)
    flat = depth.reshape(k)
    diff_pred = flat.take_rows(idx_m) - flat.take_rows(idx_n)
    diff_gt = gt[idx_m] - gt[idx_n]
    return absolute(diff_pred - diff_gt).mean()


def _face_pairs(faces: np.ndarray):
    faces = np.asarray(faces, dtype=np.int64)
    ia = faces[:, [0, 1, 2]].ravel()
    ib = faces[:, [1, 2, 0]].ravel()
    return ia, ib


def _gt_normals(mesh_gt: np.ndarray, faces: np.ndarray):
    """Unit GT face normals and a validity mask (degenerate faces skipped)."""
    v = np.asarray(mesh_gt, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norms = np.linalg.norm(n, axis=1)
    valid = norms > 1e-12
    if not valid.all():
        warnings.warn(
            f"skipping {np.count_nonzero(~valid)} degenerate ground-truth faces",
            stacklevel=3,
        )
    unit = np.zeros_like(n)
    unit[valid] = n[valid] / norms[valid, None]
    return unit, valid


def _edge_lengths(mesh: Value, ia, ib) -> Value:
    e = mesh.take_rows(ia) - mesh.take_rows(ib)
    return sqrt((e * e).sum(axis=1) + 1e-24), e


def loss_normal(mesh, mesh_gt, faces) -> Value:
    """Predicted edge directions dotted against GT face normals, per face."""
    mesh = as_value(mesh)
    normals, valid = _gt_normals(mesh_gt, faces)
    if not valid.any():
        return as_value(0.0)
    ia, ib = _face_pairs(faces)
    lengths, e = _edge_lengths(mesh, ia, ib)
    unit = e / lengths.reshape(-1, 1)
    n_rep = np.repeat(normals, 3, axis=0)
    dots = absolute((unit * n_rep).sum(axis=1))
    mask = np.repeat(valid.astype(np.float64), 3)
    return (dots * mask).sum() / float(np.count_nonzero(valid))


def loss_edge(mesh, mesh_gt, faces) -> Value:
    """Absolute edge-length differences against ground truth, per face."""
    mesh = as_value(mesh)
    _, valid = _gt_normals(mesh_gt, faces)
    if not valid.any():
        return as_value(0.0)
    ia, ib = _face_pairs(faces)
    lengths, _ = _edge_lengths(mesh, ia, ib)
    gt = np.asarray(mesh_gt, dtype=np.float64)
    gt_lengths = np.linalg.norm(gt[ia] - gt[ib], axis=1)
    mask = np.repeat(valid.astype(np.float64), 3)
    return (absolute(lengths - gt_lengths) * mask).sum() / float(np.count_nonzero(valid))


def total_loss(parts: dict, weights: LossWeights = LossWeights()) -> Value:
    zero = as_value(0.0)
    get = lambda k: parts.get(k, zero)
    return (
        get("L_M")
        + weights.joint * get("L_J")
        + weights.joint_from_mesh * get("L_JM")
        + weights.normal * get("L_N")
        + weights.edge * get("L_E")
        + weights.depth * get("L_D")
        + weights.rel_depth * get("L_rD")
    )


def compute_scene_loss(output, gt: GroundTruth, template, weights: LossWeights = LossWeights()):
    """All loss parts for one scene; unavailable GT fields contribute 0.

    `output` is a NetworkOutput; meshes/joints must share units with `gt`.
    Returns (total Value, {part name: Value}).
    """
    parts = {}
    if gt.has_mesh:
        parts["L_M"] = loss_mesh(output.mesh, gt.mesh)
        k = output.mesh.shape[0]
        ln, le = [], []
        for i in range(k):
            mesh_i = output.mesh.take_rows(np.array([i])).reshape(-1, 3)
            ln.append(loss_normal(mesh_i, gt.mesh[i], template.faces))
            le.append(loss_edge(mesh_i, gt.mesh[i], template.faces))
        parts["L_N"] = sum(ln[1:], ln[0]) / float(k)
        parts["L_E"] = sum(le[1:], le[0]) / float(k)
    if gt.has_joints:
        parts["L_J"] = loss_joint(output.joints3d, gt.joints)
        parts["L_JM"] = loss_jm(output.mesh, gt.joints, template.regressor)
    if gt.has_depth:
        parts["L_D"] = loss_depth(output.depth_measures, gt.depth_measures)
        parts["L_rD"] = loss_rel_depth(output.depth_measures, gt.depth_measures)
    return total_loss(parts, weights), parts
