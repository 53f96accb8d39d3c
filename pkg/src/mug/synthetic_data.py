"""Procedural multi-human scenes with exact ground truth.

Bodies are sampled from the template bank, articulated by rigid per-bone
rotations (vertices follow their nearest joint), and placed in front of a
pinhole camera. Ground-truth joints are defined as regressor @ mesh, so
feeding ground truth back through the losses and metrics gives exact zeros.

Also provides the training-time 2D-pose corruption model (jitter / drop /
swap) and horizontal flip augmentation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .body_template import (
    BodyTemplate,
    TemplateBank,
    build_template_bank,
    skeleton_traversal,
)
from .camera_depth import (
    DEPTH_ALPHA,
    CameraIntrinsics,
    default_intrinsics,
    depth_to_measure,
    project_points,
)
from .features import Pose2D
from .losses import GroundTruth

__all__ = [
    "HumanGT",
    "Scene",
    "NoiseModel",
    "generate_scene",
    "perturb_pose",
    "flip_augment",
    "scene_ground_truth",
    "save_scene",
    "load_scene",
]


@dataclass(frozen=True)
class HumanGT:
    mesh_abs: np.ndarray  # V x 3 mm, camera frame
    joints_abs: np.ndarray  # J x 3 mm (regressed from mesh_abs)
    depth: float  # root z, mm
    pose2d: Pose2D  # observed 2D pose, raw pixels
    body_index: int = 0


@dataclass(frozen=True)
class Scene:
    humans: tuple
    camera: CameraIntrinsics
    image_w: float
    image_h: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.humans)

    @property
    def long_edge(self) -> float:
        return max(self.image_w, self.image_h)

    def poses(self) -> list:
        return [h.pose2d for h in self.humans]

    def depths(self) -> np.ndarray:
        return np.array([h.depth for h in self.humans])


@dataclass(frozen=True)
class NoiseModel:
    jitter_std: float = 5.0  # canonical pixels
    drop_prob: float = 0.05
    swap_prob: float = 0.02

    def __post_init__(self):
        if not (0 <= self.drop_prob <= 1 and 0 <= self.swap_prob <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be nonnegative")


# ---------------------------------------------------------------------------
# Articulation
# ---------------------------------------------------------------------------


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _articulate(template: BodyTemplate, verts: np.ndarray, rng, max_angle: float):
    """Rigid per-bone posing; root ends up at the origin.

    Bone rotations stay close to the camera axis (mostly in-plane, with a
    small out-of-plane tilt) and the root yaw is limited. A single 2D view
    cannot constrain out-of-plane articulation, so keeping generated poses
    near the image plane keeps the 2D -> 3D task well posed; realism is a
    non-goal for this generator.
    """
    J = template.J
    rest_joints = template.regressor @ verts
    order, parent = skeleton_traversal(template.skeleton_edges, J, template.root_index)
    local = np.empty((J, 3, 3))
    yaw = rng.uniform(-0.4, 0.4) * max_angle
    local[template.root_index] = _rotation(np.array([0.0, 1.0, 0.0]), yaw)
    for j in range(J):
        if j == template.root_index:
            continue
        axis = np.array([0.0, 0.0, 1.0]) + 0.1 * rng.normal(size=3)
        angle = rng.uniform(-max_angle, max_angle)
        local[j] = _rotation(axis, angle)
    glob_r = np.empty((J, 3, 3))
    glob_p = np.empty((J, 3))
    for j in order:
        p = parent[j]
        if p < 0:
            glob_r[j] = local[j]
            glob_p[j] = np.zeros(3)
        else:
            glob_r[j] = glob_r[p] @ local[j]
            glob_p[j] = glob_p[p] + glob_r[p] @ (rest_joints[j] - rest_joints[p])
    owner = template.nearest_joints[:, 0]
    posed = glob_p[owner] + np.einsum(
        "vij,vj->vi", glob_r[owner], verts - rest_joints[owner]
    )
    return posed


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------


def generate_scene(
    seed: int,
    K: int,
    bank: TemplateBank,
    camera: CameraIntrinsics | None = None,
    image_w: float = 1000.0,
    image_h: float = 1000.0,
    pose_variation: float = 0.25,
    depth_range: tuple = (3000.0, 15000.0),
    min_separation: float = 300.0,
    min_depth_sep_frac: float = 0.04,
    group_prob: float = 0.5,
    group_depth_gap: tuple = (0.05, 0.15),
    group_radius: tuple = (150.0, 450.0),
    scene_scale_spread: float = 0.0,
    occlusion_radius: float = 50.0,
    max_tries: int = 200,
) -> Scene:
    """Deterministic K-human scene with exact, self-consistent ground truth.

    With probability group_prob each human after the first joins an existing
    one: its root lands within group_radius image pixels of a random anchor
    and at a depth offset of +-group_depth_gap (a fraction of the anchor
    depth). Image-space proximity then carries depth information, as it does
    in real multi-person scenes where nearby people interact; scenes placed
    fully independently would make proximity edges pure noise.

    Depth gaps are relative because the monocular cue is relative: a person's
    projected size resolves a depth difference only when the gap exceeds the
    body-height spread as a fraction of depth. min_depth_sep_frac enforces
    that relative gap between every pair of humans, grouped or not, so no
    pair is an unresolvable near-tie. Set it to zero (and shrink
    group_depth_gap) to build corpora of deliberately ambiguous pairs.

    Occlusion carries the sign of that depth information: a joint of a
    farther person landing within occlusion_radius pixels of a nearer
    person's joint is marked invisible, the way a 2D pose detector loses
    occluded keypoints. Who lost joints to whom is the one image cue that
    tells which of two overlapping people stands in front. The root joint is
    never dropped (detectors localize the hip center robustly).

    scene_scale_spread > 0 additionally scales all bodies in a scene by one
    hidden common factor, making each person's absolute size/depth ambiguous;
    a common multiplicative factor does not change the depth order, so this
    knob hardens absolute depth without touching ordering. Off by default.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    template = bank.template
    cam = camera or default_intrinsics(image_w, image_h)
    rng = np.random.default_rng(seed)
    margin = 0.05 * min(image_w, image_h)
    scene_scale = rng.uniform(1.0 - scene_scale_spread, 1.0 + scene_scale_spread)
    humans = []
    roots = []
    for _ in range(K):
        placed = False
        for _try in range(max_tries):
            body = int(rng.integers(bank.size))
            posed = scene_scale * _articulate(
                template, bank.vertex_sets[body], rng, pose_variation
            )
            if roots and rng.uniform() < group_prob:
                anchor = roots[int(rng.integers(len(roots)))]
                gap = anchor[2] * rng.uniform(*group_depth_gap)
                gap *= 1 if rng.uniform() < 0.5 else -1
                depth = float(np.clip(anchor[2] + gap, *depth_range))
                apx = project_points(anchor[None, :], cam)[0]
                ang = rng.uniform(0.0, 2.0 * np.pi)
                rad = rng.uniform(*group_radius)
                px = float(np.clip(apx[0] + rad * np.cos(ang), margin, image_w - margin))
                py = float(np.clip(apx[1] + rad * np.sin(ang), margin, image_h - margin))
            else:
                depth = rng.uniform(*depth_range)
                px = rng.uniform(margin, image_w - margin)
                py = rng.uniform(margin, image_h - margin)
            target = np.array(
                [(px - cam.cx) * depth / cam.f, (py - cam.cy) * depth / cam.f, depth]
            )
            mesh_abs = posed + target
            joints_abs = template.regressor @ mesh_abs
            root = joints_abs[template.root_index]
            if root[2] <= 0 or np.any(joints_abs[:, 2] <= 1.0):
                continue
            proj = project_points(joints_abs, cam)
            if (
                proj[:, 0].min() < 0
                or proj[:, 0].max() > image_w
                or proj[:, 1].min() < 0
                or proj[:, 1].max() > image_h
            ):
                continue
            if roots and min(np.linalg.norm(root - r) for r in roots) < min_separation:
                continue
            if roots and min(
                abs(root[2] - r[2]) / max(root[2], r[2]) for r in roots
            ) < min_depth_sep_frac:
                continue
            humans.append(
                HumanGT(
                    mesh_abs=mesh_abs,
                    joints_abs=joints_abs,
                    depth=float(root[2]),
                    pose2d=Pose2D(joints=proj),
                    body_index=body,
                )
            )
            roots.append(root)
            placed = True
            break
        if not placed:
            raise RuntimeError(f"could not place human after {max_tries} tries (seed {seed})")
    if occlusion_radius > 0 and K > 1:
        by_depth = sorted(range(K), key=lambda k: humans[k].depth)
        vis = [np.ones(template.J, dtype=bool) for _ in range(K)]
        for i, far in enumerate(by_depth):
            for near in by_depth[:i]:
                gap = np.linalg.norm(
                    humans[far].pose2d.joints[:, None, :]
                    - humans[near].pose2d.joints[None, :, :],
                    axis=2,
                ).min(axis=1)
                vis[far] &= gap >= occlusion_radius
        for k in range(K):
            vis[k][template.root_index] = True
            humans[k] = replace(
                humans[k],
                pose2d=Pose2D(joints=humans[k].pose2d.joints, visibility=vis[k]),
            )
    return Scene(
        humans=tuple(humans),
        camera=cam,
        image_w=image_w,
        image_h=image_h,
        seed=seed,
        meta={
            "pose_variation": pose_variation,
            "group_prob": group_prob,
            "scene_scale": scene_scale,
            "bank_seed": bank.seed,
        },
    )


def scene_ground_truth(scene: Scene, template: BodyTemplate, alpha: float = DEPTH_ALPHA) -> GroundTruth:
    """Root-relative mesh/joints in meters plus depth measures."""
    root_idx = template.root_index
    meshes, joints, measures = [], [], []
    for h in scene.humans:
        root = h.joints_abs[root_idx]
        meshes.append((h.mesh_abs - root) / 1000.0)
        joints.append((h.joints_abs - root) / 1000.0)
        measures.append(
            depth_to_measure(h.depth, scene.long_edge, scene.camera.f, alpha)
        )
    return GroundTruth(
        mesh=np.stack(meshes),
        joints=np.stack(joints),
        depth_measures=np.array(measures, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# 2D pose corruption
# ---------------------------------------------------------------------------


def perturb_pose(
    pose: Pose2D,
    model: NoiseModel,
    rng,
    others: list | None = None,
    canonical_scale: float = 1.0,
) -> Pose2D:
    """Jitter every joint, drop some, swap some with another human's joint.

    `canonical_scale` maps canonical pixels to raw pixels so the jitter sigma
    stays a canonical-frame quantity.
    """
    joints = pose.joints.copy()
    vis = pose.visibility.copy()
    J = pose.J
    sigma_raw = model.jitter_std / canonical_scale if canonical_scale > 0 else model.jitter_std
    if model.jitter_std > 0:
        joints = joints + rng.normal(0.0, sigma_raw, size=joints.shape)
    for j in range(J):
        if model.swap_prob > 0 and rng.random() < model.swap_prob:
            if others:
                other = others[int(rng.integers(len(others)))]
                joints[j] = other.joints[j]
            else:
                j2 = int(rng.integers(J))
                joints[[j, j2]] = joints[[j2, j]]
        if model.drop_prob > 0 and rng.random() < model.drop_prob:
            vis[j] = False
    return Pose2D(joints=joints, visibility=vis)


def perturb_scene(scene: Scene, model: NoiseModel, rng) -> Scene:
    scale = 1000.0 / scene.long_edge
    poses = scene.poses()
    new_humans = []
    for i, h in enumerate(scene.humans):
        others = [p for j, p in enumerate(poses) if j != i]
        new_humans.append(
            replace(h, pose2d=perturb_pose(h.pose2d, model, rng, others, scale))
        )
    return replace(scene, humans=tuple(new_humans))


# ---------------------------------------------------------------------------
# Flip augmentation
# ---------------------------------------------------------------------------


def flip_augment(scene: Scene, template: BodyTemplate) -> Scene:
    """Mirror the scene about the image vertical midline.

    2D x-coordinates flip to w - x, camera cx mirrors accordingly, 3D ground
    truth negates x, and joint/vertex labels swap left and right via the
    template symmetry maps.
    """
    if template.joint_swap is None or template.vertex_swap is None:
        raise ValueError("template lacks a left/right symmetry map; cannot flip")
    jswap, vswap = template.joint_swap, template.vertex_swap
    cam = scene.camera
    new_cam = CameraIntrinsics(f=cam.f, cx=scene.image_w - cam.cx, cy=cam.cy)
    new_humans = []
    for h in scene.humans:
        mesh = h.mesh_abs[vswap].copy()
        mesh[:, 0] = -mesh[:, 0]
        joints = h.joints_abs[jswap].copy()
        joints[:, 0] = -joints[:, 0]
        p2d = h.pose2d.joints[jswap].copy()
        p2d[:, 0] = scene.image_w - p2d[:, 0]
        new_humans.append(
            HumanGT(
                mesh_abs=mesh,
                joints_abs=joints,
                depth=h.depth,
                pose2d=Pose2D(joints=p2d, visibility=h.pose2d.visibility[jswap].copy()),
                body_index=h.body_index,
            )
        )
    return replace(scene, humans=tuple(new_humans), camera=new_cam)


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------


def save_scene(scene: Scene, path):
    doc = {
        "image_w": scene.image_w,
        "image_h": scene.image_h,
        "seed": scene.seed,
        "camera": {"f": scene.camera.f, "cx": scene.camera.cx, "cy": scene.camera.cy},
        "meta": scene.meta,
        "humans": [
            {
                "mesh_abs": h.mesh_abs.tolist(),
                "joints_abs": h.joints_abs.tolist(),
                "depth": h.depth,
                "pose2d": h.pose2d.joints.tolist(),
                "visibility": h.pose2d.visibility.tolist(),
                "body_index": h.body_index,
            }
            for h in scene.humans
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_scene(path) -> Scene:
    with open(path) as fh:
        doc = json.load(fh)
    cam = doc.get("camera")
    camera = (
        CameraIntrinsics(f=cam["f"], cx=cam["cx"], cy=cam["cy"])
        if cam
        else default_intrinsics(doc["image_w"], doc["image_h"])
    )
    humans = tuple(
        HumanGT(
            mesh_abs=np.asarray(h["mesh_abs"], dtype=np.float64),
            joints_abs=np.asarray(h["joints_abs"], dtype=np.float64),
            depth=float(h["depth"]),
            pose2d=Pose2D(
                joints=np.asarray(h["pose2d"], dtype=np.float64),
                visibility=np.asarray(h.get("visibility"), dtype=bool)
                if h.get("visibility") is not None
                else None,
            ),
            body_index=int(h.get("body_index", 0)),
        )
        for h in doc["humans"]
    )
    return Scene(
        humans=humans,
        camera=camera,
        image_w=float(doc["image_w"]),
        image_h=float(doc["image_h"]),
        seed=doc.get("seed"),
        meta=doc.get("meta", {}),
    )
