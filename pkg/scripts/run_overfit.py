"""Overfit a small model on a handful of synthetic scenes and report metrics.

Reproduces the seeded reference run used by the acceptance suite:
20 scenes (K alternating 2/3), hidden width 32, 200 epochs, then evaluation
on the training scenes and on 50 held-out scenes from the same generator.
"""

import argparse
import json
import time

from mug.body_template import build_synthetic_template, build_template_bank
from mug.features import feature_dim
from mug.network import NetworkConfig
from mug.synthetic_data import generate_scene
from mug.trainer import TrainConfig, evaluate_scenes, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scenes", type=int, default=20)
    ap.add_argument("--holdout", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--out", help="optional checkpoint path")
    args = ap.parse_args()

    bank = build_template_bank(build_synthetic_template("h36m17"), seed=0)
    train_scenes = [
        generate_scene(seed=1000 + i, K=2 + i % 2, bank=bank) for i in range(args.scenes)
    ]
    hold_scenes = [
        generate_scene(seed=9000 + i, K=2 + i % 2, bank=bank) for i in range(args.holdout)
    ]
    config = TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        network=NetworkConfig(hidden=args.hidden, feature_dim=feature_dim(17)),
    )
    t0 = time.time()
    result = train(train_scenes, bank, config, checkpoint_path=args.out)
    elapsed = time.time() - t0
    report = {
        "train": evaluate_scenes(train_scenes, result.params, config.network, bank).summary(),
        "holdout": evaluate_scenes(hold_scenes, result.params, config.network, bank).summary(),
        "aborted": result.aborted,
        "seconds": round(elapsed, 1),
    }
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
