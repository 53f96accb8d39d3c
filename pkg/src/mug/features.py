"""Per-node input features from raw 2D poses.

Each joint row concatenates, in fixed order: the joint's canonical 2D
coordinates, the flattened canonical pose, the joint's normalized 2D
coordinates, and the regressed template-bank joint coordinates (11 bodies).
Mesh rows substitute the vertex's nearest joint for the per-joint terms and
the bank's vertex coordinates for the regressed joints.

Scale harmonization: canonical pixel entries are divided by 1000 and template
coordinates converted from millimeters to meters, so every channel is O(1).

Alongside the feature rows, build_features supplies a per-human body prior:
the rest template posed so every bone's image-plane direction matches the
observed 2D pose (see pose_prior). The network regresses offsets from this
prior instead of absolute coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .body_template import TemplateBank, skeleton_traversal

__all__ = [
    "Pose2D",
    "CanonicalTransform",
    "FeatureMatrix",
    "normalize_pose",
    "canonicalize",
    "joint_feature_row",
    "mesh_feature_row",
    "pose_prior",
    "build_features",
    "feature_dim",
    "CANONICAL_SIZE",
]

CANONICAL_SIZE = 1000.0
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class Pose2D:
    joints: np.ndarray  # J x 2 raw-image pixels
    visibility: np.ndarray = None  # J bools

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        object.__setattr__(self, "joints", joints)
        vis = self.visibility
        vis = np.ones(len(joints), dtype=bool) if vis is None else np.asarray(vis, dtype=bool)
        object.__setattr__(self, "visibility", vis)

    @property
    def J(self) -> int:
        return self.joints.shape[0]

    def imputed(self) -> np.ndarray:
        """Joint coordinates with invisible joints replaced by the visible centroid."""
        if self.visibility.all():
            return self.joints.copy()
        if not self.visibility.any():
            return self.joints.copy()
        out = self.joints.copy()
        out[~self.visibility] = self.joints[self.visibility].mean(axis=0)
        return out


@dataclass(frozen=True)
class CanonicalTransform:
    scale: float
    offset: np.ndarray  # 2-vector, pixels

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.offset) / self.scale


@dataclass(frozen=True)
class FeatureMatrix:
    joint_features: np.ndarray  # (K*J) x d
    mesh_features: np.ndarray  # (K*V) x d
    # per-human pose-aligned body prior (root-centered, meters); the network
    # regresses offsets from these rather than raw coordinates
    joint_base: np.ndarray | None = None  # (K*J) x 3
    mesh_base: np.ndarray | None = None  # (K*V) x 3

    @property
    def d(self) -> int:
        return self.joint_features.shape[1]


def feature_dim(J: int, bank_size: int = 11) -> int:
    return 2 + 2 * J + 2 + 3 * bank_size


def normalize_pose(pose: Pose2D) -> np.ndarray:
    """Zero-mean, unit-std (population) coordinates over visible joints.

    Invisible joints pass through the same affine map. A zero standard
    deviation on an axis is floored at 1e-6 with a warning.
    """
    coords = pose.imputed()
    vis = pose.visibility if pose.visibility.any() else np.ones(pose.J, dtype=bool)
    mean = coords[vis].mean(axis=0)
    std = coords[vis].std(axis=0)
    if np.any(std < STD_FLOOR):
        warnings.warn("degenerate pose: zero standard deviation on an axis", stacklevel=2)
        std = np.maximum(std, STD_FLOOR)
    return (coords - mean) / std


def canonicalize(pose: Pose2D, image_w: float, image_h: float):
    """Map raw pixels into the 1000 x 1000 canonical square (long edge = 1000)."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    scale = CANONICAL_SIZE / max(image_w, image_h)
    offset = np.array(
        [
            (CANONICAL_SIZE - image_w * scale) / 2.0,
            (CANONICAL_SIZE - image_h * scale) / 2.0,
        ]
    )
    transform = CanonicalTransform(scale=scale, offset=offset)
    return transform.apply(pose.imputed()), transform


def _template_channels(bank: TemplateBank):
    """Bank coordinate channels in meters: (B*3 per joint, B*3 per vertex)."""
    joint_cols = np.concatenate([bank.joints(b) / 1000.0 for b in range(bank.size)], axis=1)
    vertex_cols = np.concatenate([vs / 1000.0 for vs in bank.vertex_sets], axis=1)
    return joint_cols, vertex_cols


def joint_feature_row(
    j: int, pose_canon: np.ndarray, pose_norm: np.ndarray, bank: TemplateBank
) -> np.ndarray:
    joint_cols, _ = _template_channels(bank)
    return np.concatenate(
        [
            pose_canon[j] / CANONICAL_SIZE,
            pose_canon.ravel() / CANONICAL_SIZE,
            pose_norm[j],
            joint_cols[j],
        ]
    )


def mesh_feature_row(
    v: int,
    pose_canon: np.ndarray,
    pose_norm: np.ndarray,
    bank: TemplateBank,
    nearest_joints: np.ndarray,
) -> np.ndarray:
    _, vertex_cols = _template_channels(bank)
    j_star = int(nearest_joints[v, 0])
    return np.concatenate(
        [
            pose_canon[j_star] / CANONICAL_SIZE,
            pose_canon.ravel() / CANONICAL_SIZE,
            pose_norm[j_star],
            vertex_cols[v],
        ]
    )


def pose_prior(template, pose_canon: np.ndarray, visibility: np.ndarray | None = None) -> tuple:
    """Rest body posed to the observed 2D pose (root-centered, meters).

    Each bone is rotated about the camera axis so its image-plane direction
    matches the observed 2D bone direction; vertices follow their nearest
    joint rigidly. Image-plane rotations preserve depth offsets and edge
    lengths, so the prior is an articulated, edge-consistent starting point
    that the network only needs to refine (out-of-plane tilt, root yaw, and
    body shape are left to the regressed offsets). Bones with an invisible
    endpoint keep their rest direction: an imputed coordinate says nothing
    about where the limb actually points.

    Returns (prior_joints J x 3, prior_mesh V x 3).
    """
    rest = template.vertices / 1000.0
    rest_j = template.regressor @ rest
    J = template.J
    order, parent = skeleton_traversal(template.skeleton_edges, J, template.root_index)
    rot = np.tile(np.eye(3), (J, 1, 1))
    pos = np.zeros((J, 3))
    for j in order:
        p = parent[j]
        if p < 0:
            continue
        bone = rest_j[j] - rest_j[p]
        d2 = pose_canon[j] - pose_canon[p]
        seen = visibility is None or (visibility[j] and visibility[p])
        if seen and np.hypot(*d2) > 1e-9 and np.hypot(bone[0], bone[1]) > 1e-9:
            theta = np.arctan2(d2[1], d2[0]) - np.arctan2(bone[1], bone[0])
            c, s = np.cos(theta), np.sin(theta)
            rot[j] = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pos[j] = pos[p] + rot[j] @ bone
    owner = template.nearest_joints[:, 0]
    mesh = pos[owner] + np.einsum("vij,vj->vi", rot[owner], rest - rest_j[owner])
    mesh = mesh - (template.regressor @ mesh)[template.root_index]
    return template.regressor @ mesh, mesh


def build_features(
    poses: list,
    image_w: float,
    image_h: float,
    bank: TemplateBank,
) -> tuple:
    """Assemble the full feature matrix for K humans.

    Returns (FeatureMatrix, canonical poses K x J x 2, CanonicalTransform).
    Rows follow the scene-graph node ordering.
    """
    template = bank.template
    J, V = template.J, template.V
    joint_cols, vertex_cols = _template_channels(bank)
    nearest = template.nearest_joints[:, 0]
    canon_list, transform = [], None
    joint_rows, mesh_rows = [], []
    base_joint_rows, base_mesh_rows = [], []
    for pose in poses:
        canon, transform = canonicalize(pose, image_w, image_h)
        norm = normalize_pose(pose)
        canon_list.append(canon)
        flat = np.tile(canon.ravel() / CANONICAL_SIZE, (J, 1))
        joint_rows.append(
            np.concatenate([canon / CANONICAL_SIZE, flat, norm, joint_cols], axis=1)
        )
        flat_v = np.tile(canon.ravel() / CANONICAL_SIZE, (V, 1))
        mesh_rows.append(
            np.concatenate(
                [canon[nearest] / CANONICAL_SIZE, flat_v, norm[nearest], vertex_cols],
                axis=1,
            )
        )
        base_j, base_m = pose_prior(template, canon, pose.visibility)
        base_joint_rows.append(base_j)
        base_mesh_rows.append(base_m)
    feats = FeatureMatrix(
        joint_features=np.concatenate(joint_rows, axis=0),
        mesh_features=np.concatenate(mesh_rows, axis=0),
        joint_base=np.concatenate(base_joint_rows, axis=0),
        mesh_base=np.concatenate(base_mesh_rows, axis=0),
    )
    return feats, np.stack(canon_list), transform
