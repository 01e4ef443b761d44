#!/usr/bin/env python3
"""Overfit the single-frame model on 64 synthetic images and report how far
the loss and the training-set PA-MPJPE drop relative to the untrained model.
"""

import argparse
import csv
import time

import numpy as np
import torch

from tokmesh.base_model import BaseModel
from tokmesh.body_model import build_mini_model
from tokmesh.checkpoint import build_models
from tokmesh.config import DataConfig, PhaseConfig, RunConfig
from tokmesh.evaluation import evaluate_models
from tokmesh.losses import LossWeights
from tokmesh.training import make_phase_dataset, train


def overfit_config(out_dir: str, seed: int = 0, steps: int = 700) -> RunConfig:
    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        data=DataConfig(num_sequences=16, clip_len=4),
        phases=[
            PhaseConfig(steps=steps, batch_size=64, mode="image", optimizer="adam",
                        lr=1e-3, lr_decay_steps=[int(steps * 0.64)], weights=LossWeights(velocity=0.0)),
        ],
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/overfit")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=700)
    args = parser.parse_args()

    config = overfit_config(args.out, args.seed, args.steps)
    start = time.time()
    ckpt = train(config, phase=1)
    print(f"trained {args.steps} steps in {time.time() - start:.0f}s")

    with open(f"{config.out_dir}/loss_log.csv") as fh:
        losses = np.array([float(r["total"]) for r in csv.DictReader(fh)])
    print(f"loss: {losses[0]:.2f} -> {losses[-1]:.2f} (ratio {losses[-1] / losses[0]:.3f})")

    body = build_mini_model(config.data.body_seed, config.data.vertices)
    train_set = make_phase_dataset(config, config.phases[0], 1, body)
    trained, _ = build_models(ckpt)
    torch.manual_seed(config.seed)
    untrained = BaseModel(config.model)
    pa_trained = evaluate_models(trained, None, body, train_set)["pa_mpjpe"]
    pa_untrained = evaluate_models(untrained, None, body, train_set)["pa_mpjpe"]
    print(f"train-set PA-MPJPE: {pa_untrained:.4f} -> {pa_trained:.4f} (ratio {pa_trained / pa_untrained:.3f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
