"""Training loop, checkpointing, inference pipeline, and scene evaluation.

Training is sequential over scenes (batch size 1), with seeded shuffling,
horizontal flip augmentation, 2D pose corruption, global gradient-norm
clipping, and a step learning-rate schedule. All randomness flows from one
generator seeded by the config, so runs are bit-identical.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .body_template import BodyTemplate, TemplateBank
from .camera_depth import (
    DEPTH_ALPHA,
    backproject_root,
    measure_to_depth,
    project_points,
)
from .features import build_features, canonicalize, feature_dim
from .graph_builder import DEFAULT_EPSILON, assemble_scene_graph
from .losses import LossWeights, compute_scene_loss
from .metrics import EvalReport, match_humans
from .network import (
    GraphOperators,
    NetworkConfig,
    build_operators,
    forward_with_params,
    init_params,
    _lap_from_pairs,
)
from .synthetic_data import (
    NoiseModel,
    Scene,
    flip_augment,
    perturb_scene,
    scene_ground_truth,
)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "Prediction",
    "train",
    "infer_scene",
    "evaluate_scenes",
    "save_checkpoint",
    "load_checkpoint",
    "OperatorCache",
]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    lr: float = 1e-3
    # None drops the rate after two-thirds of training (epoch 10 of the
    # default 15); an explicit epoch pins the drop point
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 10.0
    grad_clip: float = 5.0
    flip_prob: float = 0.5
    epsilon: float = DEFAULT_EPSILON
    root_edges: bool = True
    seed: int = 0
    # flip is the default augmentation; synthetic 2D-pose error is opt-in
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.0, 0.0, 0.0))
    network: NetworkConfig = field(default_factory=NetworkConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-indexed epoch."""
        drop = self.lr_drop_epoch
        if drop is None:
            drop = (2 * self.epochs) // 3
        return self.lr / self.lr_drop_factor if epoch > drop else self.lr


@dataclass
class TrainResult:
    params: dict
    history: list  # dicts: epoch, scene, total, per-part losses
    config: TrainConfig
    aborted: bool = False


class OperatorCache:
    """Caches the pose-independent graph operators (skeleton and mesh
    Laplacians, joint-to-mesh averaging) keyed by human count. Inter-human
    Laplacians depend on the 2D poses and are rebuilt per scene."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self._static = {}

    def build(self, graph) -> GraphOperators:
        key = graph.K
        if key not in self._static:
            full = build_operators(graph, self.config)
            self._static[key] = (full.joint_laps["jj"], full.mesh_lap, full.jm)
        jj, mesh_lap, jm = self._static[key]
        nj = graph.num_joint_nodes
        joint_laps = {"jj": jj}
        if self.config.edge_type_mode == "split_root":
            joint_laps["inter_root"] = _lap_from_pairs(
                nj, graph.inter_pairs(include_proximity=False)
            )
            joint_laps["inter_prox"] = _lap_from_pairs(
                nj, graph.inter_pairs(include_root=False)
            )
        else:
            joint_laps["inter"] = _lap_from_pairs(nj, graph.inter_pairs())
        return GraphOperators(
            joint_laps=joint_laps, mesh_lap=mesh_lap, jm=jm, root_nodes=graph.root_nodes()
        )


def _clip_grads(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if max_norm <= 0 or total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def _scene_step(scene, bank, params, config, cache):
    """Forward + loss for one (already augmented) scene."""
    template = bank.template
    feats, canon, _ = build_features(
        scene.poses(), scene.image_w, scene.image_h, bank
    )
    graph = assemble_scene_graph(
        template, canon, epsilon=config.epsilon, root_edges=config.root_edges
    )
    ops = cache.build(graph)
    out, pvals = forward_with_params(graph, feats, params, config.network, ops)
    gt = scene_ground_truth(scene, template)
    total, parts = compute_scene_loss(out, gt, template, config.weights)
    return total, parts, pvals


def train(
    scenes: list,
    bank: TemplateBank,
    config: TrainConfig,
    init: dict | None = None,
    loss_csv=None,
    checkpoint_path=None,
) -> TrainResult:
    """Train on a list of scenes; returns final params and the loss history.

    A non-finite loss or gradient aborts training; the last finished epoch's
    checkpoint (if a path was given) is left intact and the last finite
    parameters are returned.
    """
    rng = np.random.default_rng(config.seed)
    params = init if init is not None else init_params(config.seed, config.network)
    state = nx.AdamState(lr=config.lr)
    cache = OperatorCache(config.network)
    history = []
    writer = fh = None
    if loss_csv is not None:
        fh = open(loss_csv, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "scene", "total", "L_M", "L_J", "L_JM", "L_N", "L_E", "L_D", "L_rD"])
    aborted = False
    try:
        for epoch in range(1, config.epochs + 1):
            state = replace(state, lr=config.lr_at(epoch))
            order = rng.permutation(len(scenes))
            for si in order:
                scene = scenes[int(si)]
                if config.flip_prob > 0 and rng.random() < config.flip_prob:
                    scene = flip_augment(scene, bank.template)
                scene = perturb_scene(scene, config.noise, rng)
                try:
                    total, parts, pvals = _scene_step(scene, bank, params, config, cache)
                    if not np.isfinite(total.data):
                        raise FloatingPointError("non-finite loss")
                    grads = nx.backward(total, pvals)
                    grads = _clip_grads(grads, config.grad_clip)
                    params, state = nx.adam_step(params, grads, state)
                except FloatingPointError as exc:
                    warnings.warn(f"training aborted at epoch {epoch}: {exc}")
                    aborted = True
                    break
                row = {
                    "epoch": epoch,
                    "scene": int(si),
                    "total": float(total.data),
                    **{k: float(v.data) for k, v in parts.items()},
                }
                history.append(row)
                if writer is not None:
                    writer.writerow(
                        [epoch, int(si), row["total"]]
                        + [row.get(k, 0.0) for k in ("L_M", "L_J", "L_JM", "L_N", "L_E", "L_D", "L_rD")]
                    )
            if aborted:
                break
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, params, config, bank.template, state, epoch)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(params=params, history=history, config=config, aborted=aborted)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _config_doc(config: TrainConfig) -> dict:
    doc = asdict(config)
    return doc


def save_checkpoint(path, params, config: TrainConfig, template: BodyTemplate, state=None, epoch=None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": _config_doc(config),
        "template_hash": template.content_hash(),
        "epoch": epoch,
        "adam_step": state.step if state is not None else 0,
    }
    arrays = {f"param:{k}": v for k, v in sorted(params.items())}
    if state is not None:
        arrays.update({f"adam_m:{k}": v for k, v in sorted(state.m.items())})
        arrays.update({f"adam_v:{k}": v for k, v in sorted(state.v.items())})
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path):
    """Returns (params, meta dict, AdamState)."""
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        params, m, v = {}, {}, {}
        for key in npz.files:
            if key.startswith("param:"):
                params[key[len("param:"):]] = npz[key]
            elif key.startswith("adam_m:"):
                m[key[len("adam_m:"):]] = npz[key]
            elif key.startswith("adam_v:"):
                v[key[len("adam_v:"):]] = npz[key]
    cfg_doc = meta.get("config", {})
    state = nx.AdamState(
        step=int(meta.get("adam_step", 0)),
        lr=float(cfg_doc.get("lr", 1e-3)),
        m=m,
        v=v,
    )
    return params, meta, state


def config_from_doc(doc: dict) -> TrainConfig:
    net = NetworkConfig(**doc.get("network", {}))
    noise = NoiseModel(**doc.get("noise", {}))
    weights = LossWeights(**doc.get("weights", {}))
    rest = {
        k: v
        for k, v in doc.items()
        if k not in ("network", "noise", "weights")
    }
    return TrainConfig(network=net, noise=noise, weights=weights, **rest)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    """Network outputs lifted back to metric camera space (millimeters)."""

    mesh_rel: np.ndarray  # K x V x 3 mm, root-relative
    joints_rel: np.ndarray  # K x J x 3 mm
    depth_measures: np.ndarray  # K, dimensionless
    depths: np.ndarray  # K, mm
    roots: np.ndarray  # K x 3 mm, camera frame
    mesh_abs: np.ndarray  # K x V x 3 mm
    mesh_full: np.ndarray | None = None  # K x V_full x 3 mm, root-relative


def infer_scene(
    poses: list,
    image_w: float,
    image_h: float,
    params: dict,
    net_config: NetworkConfig,
    bank: TemplateBank,
    camera=None,
    epsilon: float = DEFAULT_EPSILON,
    root_edges: bool = True,
    upsample: bool = False,
    cache: OperatorCache | None = None,
) -> Prediction:
    """Full pipeline: 2D poses in, metric meshes and absolute roots out."""
    from .camera_depth import default_intrinsics

    template = bank.template
    cam = camera or default_intrinsics(image_w, image_h)
    feats, canon, transform = build_features(poses, image_w, image_h, bank)
    graph = assemble_scene_graph(template, canon, epsilon=epsilon, root_edges=root_edges)
    ops = (cache or OperatorCache(net_config)).build(graph)
    out, _ = forward_with_params(graph, feats, params, net_config, ops)
    measures, joints_m, mesh_m = out.numpy()
    long_edge = max(image_w, image_h)
    depths = measure_to_depth(measures, long_edge, cam.f)
    if np.any(depths < 1.0):
        warnings.warn("clamping non-positive predicted depths to 1 mm")
        depths = np.maximum(depths, 1.0)
    roots = []
    root_px = np.stack([p.imputed()[template.root_index] for p in poses])
    for k in range(graph.K):
        roots.append(backproject_root(root_px[k, 0], root_px[k, 1], depths[k], cam))
    roots = np.stack(roots)
    mesh_rel = mesh_m * 1000.0
    joints_rel = joints_m * 1000.0
    mesh_abs = mesh_rel + roots[:, None, :]
    mesh_full = None
    if upsample:
        mesh_full = np.stack([template.upsample @ mesh_rel[k] for k in range(graph.K)])
    return Prediction(
        mesh_rel=mesh_rel,
        joints_rel=joints_rel,
        depth_measures=measures,
        depths=depths,
        roots=roots,
        mesh_abs=mesh_abs,
        mesh_full=mesh_full,
    )


def evaluate_scenes(
    scenes: list,
    params: dict,
    net_config: NetworkConfig,
    bank: TemplateBank,
    epsilon: float = DEFAULT_EPSILON,
    root_edges: bool = True,
) -> EvalReport:
    """Run inference on every scene and accumulate matched-human metrics."""
    template = bank.template
    report = EvalReport()
    cache = OperatorCache(net_config)
    for scene in scenes:
        pred = infer_scene(
            scene.poses(),
            scene.image_w,
            scene.image_h,
            params,
            net_config,
            bank,
            camera=scene.camera,
            epsilon=epsilon,
            root_edges=root_edges,
            cache=cache,
        )
        # match in the canonical 2D frame by root location
        gt_roots_px = np.stack(
            [h.pose2d.imputed()[template.root_index] for h in scene.humans]
        )
        pred_roots_px = project_points(pred.roots, scene.camera)
        _, transform = canonicalize(scene.humans[0].pose2d, scene.image_w, scene.image_h)
        pairs = match_humans(
            transform.apply(pred_roots_px), transform.apply(gt_roots_px)
        )
        gt = scene_ground_truth(scene, template)
        for pi, gi in pairs:
            report.add_human(
                pred.joints_rel[pi],
                gt.joints[gi] * 1000.0,
                pred.mesh_rel[pi],
                gt.mesh[gi] * 1000.0,
            )
        if pairs:
            order = [pi for pi, _ in sorted(pairs, key=lambda x: x[1])]
            gt_order = sorted(gi for _, gi in pairs)
            report.add_depths(
                pred.depth_measures[order], gt.depth_measures[gt_order]
            )
    return report
