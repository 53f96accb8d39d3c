"""Command-line interface.

Subcommands: gen-data, dump-graph, train, infer, eval, export-mesh.

Values resolve in precedence order: command-line flag, then JSON config file
(--config), then built-in default. MUG_THREADS caps the BLAS thread pools and
must be read before numpy is imported.
"""

import os

if os.environ.get("MUG_THREADS"):
    _n = os.environ["MUG_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _n)

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

__all__ = ["main", "build_parser"]

DEFAULTS = {
    "seed": 0,
    "epsilon": 200.0,
    "hidden": 64,
    "cheb_order": 2,
    "epochs": 15,
    "lr": 1e-3,
    "humans": 3,
    "count": 100,
    "joint_set": "h36m17",
    "flip_prob": 0.5,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mug", description="multi-human mesh recovery pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file; flags take precedence")
    common.add_argument("--seed", type=int)
    common.add_argument("--epsilon", type=float, help="proximity edge threshold, canonical px")
    common.add_argument("--hidden", type=int)
    common.add_argument("--cheb-order", type=int, dest="cheb_order")
    common.add_argument("--template", type=Path, help="template JSON; default is the bundled synthetic body")
    common.add_argument("--out", type=Path)
    common.add_argument("--no-root-edges", action="store_true", help="drop root-to-root edges (0+ ablation)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate synthetic scenes")
    p.add_argument("--count", type=int, help="number of scenes")
    p.add_argument("--humans", type=int, help="humans per scene")
    p.add_argument("--joint-set", dest="joint_set", choices=["h36m17", "coco19"])

    p = sub.add_parser("dump-graph", parents=[common], help="print a scene's typed edge lists")
    p.add_argument("scene", type=Path)

    p = sub.add_parser("train", parents=[common], help="train on a scene directory")
    p.add_argument("data", type=Path)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--flip-prob", type=float, dest="flip_prob")
    p.add_argument("--loss-csv", type=Path, dest="loss_csv")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("infer", parents=[common], help="run inference on one scene")
    p.add_argument("scene", type=Path)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--upsample", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a scene directory")
    p.add_argument("data", type=Path)
    p.add_argument("--ckpt", type=Path, required=True)

    p = sub.add_parser("export-mesh", parents=[common], help="write predicted meshes as OBJ + JSON")
    p.add_argument("scene", type=Path)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--upsample", action="store_true")
    return parser


def _resolve(args, key):
    """Flag value, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if getattr(args, "_config_doc", None) and key in args._config_doc:
        return args._config_doc[key]
    return DEFAULTS.get(key)


def _load_config_doc(args):
    doc = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise SystemExit(f"config file {args.config} must hold a JSON object")
    args._config_doc = doc


def _get_template(args):
    from .body_template import build_synthetic_template, load_template

    if getattr(args, "template", None):
        return load_template(args.template)
    return build_synthetic_template(_resolve(args, "joint_set"))


def _get_bank(args, template):
    from .body_template import build_template_bank

    return build_template_bank(template, seed=0)


def _load_scenes(directory: Path):
    from .synthetic_data import load_scene

    files = sorted(Path(directory).glob("scene_*.json"))
    if not files:
        raise SystemExit(f"no scene_*.json files in {directory}")
    return [load_scene(f) for f in files]


def _net_config(args, J: int):
    from .body_template import BANK_SIZE
    from .features import feature_dim
    from .network import NetworkConfig

    return NetworkConfig(
        hidden=_resolve(args, "hidden"),
        cheb_order=_resolve(args, "cheb_order"),
        feature_dim=feature_dim(J, BANK_SIZE),
    )


def cmd_gen_data(args):
    from .synthetic_data import generate_scene, save_scene

    template = _get_template(args)
    bank = _get_bank(args, template)
    out = args.out or Path("data")
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve(args, "seed")
    count = _resolve(args, "count")
    humans = _resolve(args, "humans")
    for i in range(count):
        scene = generate_scene(seed=seed + i, K=humans, bank=bank)
        save_scene(scene, out / f"scene_{i:04d}.json")
    print(f"wrote {count} scenes to {out}")
    return 0


def cmd_dump_graph(args):
    from .features import build_features
    from .graph_builder import assemble_scene_graph, graph_as_dict
    from .synthetic_data import load_scene

    template = _get_template(args)
    bank = _get_bank(args, template)
    scene = load_scene(args.scene)
    _, canon, _ = build_features(scene.poses(), scene.image_w, scene.image_h, bank)
    graph = assemble_scene_graph(
        template,
        canon,
        epsilon=_resolve(args, "epsilon"),
        root_edges=not args.no_root_edges,
    )
    doc = graph_as_dict(graph)
    text = json.dumps(doc, indent=2)
    if args.out:
        args.out.write_text(text)
    else:
        print(text)
    return 0


def cmd_train(args):
    from .losses import LossWeights
    from .synthetic_data import NoiseModel
    from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train

    template = _get_template(args)
    bank = _get_bank(args, template)
    scenes = _load_scenes(args.data)
    J = template.J
    config = TrainConfig(
        epochs=_resolve(args, "epochs"),
        lr=_resolve(args, "lr"),
        flip_prob=_resolve(args, "flip_prob"),
        epsilon=_resolve(args, "epsilon"),
        root_edges=not args.no_root_edges,
        seed=_resolve(args, "seed"),
        noise=NoiseModel(),
        network=_net_config(args, J),
        weights=LossWeights(),
    )
    init = None
    if args.resume:
        init, meta, _ = load_checkpoint(args.resume)
        print(f"resuming from {args.resume} (epoch {meta.get('epoch')})")
    out = args.out or Path("checkpoint.npz")
    result = train(
        scenes,
        bank,
        config,
        init=init,
        loss_csv=args.loss_csv,
        checkpoint_path=out,
    )
    status = "aborted" if result.aborted else "done"
    last = result.history[-1]["total"] if result.history else float("nan")
    print(f"training {status}; final loss {last:.6f}; checkpoint at {out}")
    return 1 if result.aborted else 0


def _load_for_inference(args):
    from .trainer import config_from_doc, load_checkpoint

    template = _get_template(args)
    bank = _get_bank(args, template)
    params, meta, _ = load_checkpoint(args.ckpt)
    tpl_hash = meta.get("template_hash")
    if tpl_hash and tpl_hash != template.content_hash():
        print(
            f"warning: checkpoint was trained with template {tpl_hash}, "
            f"current template is {template.content_hash()}",
            file=sys.stderr,
        )
    config = config_from_doc(meta["config"])
    if getattr(args, "epsilon", None) is not None:
        config = replace(config, epsilon=args.epsilon)
    if args.no_root_edges:
        config = replace(config, root_edges=False)
    return template, bank, params, config


def cmd_infer(args):
    from .synthetic_data import load_scene
    from .trainer import infer_scene

    template, bank, params, config = _load_for_inference(args)
    scene = load_scene(args.scene)
    pred = infer_scene(
        scene.poses(),
        scene.image_w,
        scene.image_h,
        params,
        config.network,
        bank,
        camera=scene.camera,
        epsilon=config.epsilon,
        root_edges=config.root_edges,
        upsample=args.upsample,
    )
    doc = {
        "mesh_rel": pred.mesh_rel.tolist(),
        "joints_rel": pred.joints_rel.tolist(),
        "depth_measures": pred.depth_measures.tolist(),
        "depths": pred.depths.tolist(),
        "roots": pred.roots.tolist(),
        "mesh_abs": pred.mesh_abs.tolist(),
    }
    if pred.mesh_full is not None:
        doc["mesh_full"] = pred.mesh_full.tolist()
    text = json.dumps(doc)
    if args.out:
        args.out.write_text(text)
        print(f"wrote prediction to {args.out}")
    else:
        print(text)
    return 0


def cmd_eval(args):
    from .trainer import evaluate_scenes

    template, bank, params, config = _load_for_inference(args)
    scenes = _load_scenes(args.data)
    report = evaluate_scenes(
        scenes,
        params,
        config.network,
        bank,
        epsilon=config.epsilon,
        root_edges=config.root_edges,
    )
    text = json.dumps(report.summary(), indent=2)
    if args.out:
        args.out.write_text(text)
    print(text)
    return 0


def export_obj(path, meshes: np.ndarray, faces: np.ndarray):
    """OBJ with one object per human, named human_k; 1-indexed faces."""
    lines = []
    offset = 0
    for k, mesh in enumerate(meshes):
        lines.append(f"o human_{k}")
        for v in mesh:
            lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
        for f in faces:
            lines.append(f"f {f[0] + 1 + offset} {f[1] + 1 + offset} {f[2] + 1 + offset}")
        offset += len(mesh)
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_export_mesh(args):
    from .synthetic_data import load_scene
    from .trainer import infer_scene

    template, bank, params, config = _load_for_inference(args)
    scene = load_scene(args.scene)
    pred = infer_scene(
        scene.poses(),
        scene.image_w,
        scene.image_h,
        params,
        config.network,
        bank,
        camera=scene.camera,
        epsilon=config.epsilon,
        root_edges=config.root_edges,
        upsample=args.upsample,
    )
    out = args.out or Path("mesh.obj")
    if args.upsample:
        meshes = pred.mesh_full + pred.roots[:, None, :]
        faces = template.faces_full
        if faces is None:
            raise SystemExit("template has no subdivided face list; rerun without --upsample")
    else:
        meshes = pred.mesh_abs
        faces = template.faces
    export_obj(out, meshes, faces)
    # lossless float64 sidecar next to the OBJ
    sidecar = Path(out).with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "meshes": meshes.tolist(),
                "faces": faces.tolist(),
                "roots": pred.roots.tolist(),
                "depths": pred.depths.tolist(),
            }
        )
    )
    print(f"wrote {out} and {sidecar}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "dump-graph": cmd_dump_graph,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "export-mesh": cmd_export_mesh,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _load_config_doc(args)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
