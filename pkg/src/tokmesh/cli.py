"""Command-line interface: train, eval, infer, inspect-attention, export-prior."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from tokmesh.archive import save_archive
from tokmesh.checkpoint import build_models, load_checkpoint
from tokmesh.config import RunConfig
from tokmesh.evaluation import (
    attention_period_probe,
    body_from_config,
    dump_attention,
    evaluate,
    export_prior,
    sequence_predictions,
)
from tokmesh.synthdata import dataset_from_archive, make_dataset
from tokmesh.training import eval_data_seed, render_params, set_determinism, train


def _load_config(args) -> RunConfig:
    config = RunConfig.from_yaml(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "out", None) is not None:
        config = replace(config, out_dir=str(args.out))
    return config


def _eval_dataset(config: RunConfig, body, t_eval: int):
    return make_dataset(
        body,
        seed=eval_data_seed(config.seed),
        num_sequences=config.data.num_sequences,
        clip_len=t_eval,
        stride=config.data.stride,
        image_hw=(config.model.height, config.model.width),
        max_amplitude=config.data.max_amplitude,
        beta_scale=config.data.beta_scale,
        params=render_params(config),
    )


def cmd_train(args) -> int:
    config = _load_config(args)
    init = load_checkpoint(args.init) if args.init else None
    ckpt = train(config, phase=args.phase, init=init)
    print(f"trained through phase {ckpt.phase}; checkpoint in {config.out_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    set_determinism(config.seed, config.threads)
    body = body_from_config(config)
    t_eval = args.t_eval or config.data.clip_len
    dataset = _eval_dataset(config, body, t_eval)
    out_csv = Path(args.out) / "metrics.csv"
    values = evaluate(ckpt, dataset, out_csv=out_csv)
    for name, value in values.items():
        print(f"{name}: {value:.6f}")
    print(f"wrote {out_csv}")
    return 0


def cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    set_determinism(config.seed, config.threads)
    base, temporal = build_models(ckpt)
    body = body_from_config(config)
    if args.input:
        dataset = dataset_from_archive(args.input)
    else:
        dataset = _eval_dataset(config, body, args.t_eval or config.data.clip_len)
    arrays: dict[str, np.ndarray] = {}
    for i, seq in enumerate(dataset):
        pred = sequence_predictions(base, temporal, body, seq.images)
        for key, value in pred.items():
            arrays[f"seq{i:04d}/{key}"] = value
    out_path = Path(args.out) / "predictions.naa"
    save_archive(out_path, arrays, meta={"kind": "predictions", "config_hash": config.config_hash()})
    print(f"wrote {out_path}")
    return 0


def cmd_inspect_attention(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    set_determinism(config.seed, config.threads)
    body = body_from_config(config)
    dataset = _eval_dataset(config, body, args.t_eval or config.data.clip_len)
    out_path = Path(args.out) / "attention.naa"
    arrays = dump_attention(ckpt, dataset[0].images, out_path)
    if "temporal_attention" in arrays:
        lags = attention_period_probe(arrays["temporal_attention"])
        print("dominant attention lag per joint:", lags)
    print(f"wrote {out_path}")
    return 0


def cmd_export_prior(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    out_path = Path(args.out) / "prior.naa"
    arrays = export_prior(ckpt, out_path)
    print(f"prior pose magnitude (rad, max |block|): {np.abs(arrays['theta'].reshape(24, 3)).max():.4f}")
    print(f"wrote {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokmesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the progressive training phases")
    p_train.add_argument("--config", type=Path, default=None, help="YAML run config")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--phase", type=int, default=None, choices=(1, 2, 3), help="run a single phase")
    p_train.add_argument("--init", type=Path, default=None, help="warm-start checkpoint")
    p_train.add_argument("--out", type=Path, default=None, help="override output directory")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="compute metrics for a checkpoint")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--t-eval", type=int, default=None, help="evaluation clip length")
    p_eval.add_argument("--out", type=Path, required=True)
    p_eval.set_defaults(fn=cmd_eval)

    p_infer = sub.add_parser("infer", help="write per-frame predictions for a dataset")
    p_infer.add_argument("--checkpoint", type=Path, required=True)
    p_infer.add_argument("--input", type=Path, default=None, help="dataset archive (default: synthetic)")
    p_infer.add_argument("--t-eval", type=int, default=None)
    p_infer.add_argument("--out", type=Path, required=True)
    p_infer.set_defaults(fn=cmd_infer)

    p_att = sub.add_parser("inspect-attention", help="dump attention matrices")
    p_att.add_argument("--checkpoint", type=Path, required=True)
    p_att.add_argument("--t-eval", type=int, default=None)
    p_att.add_argument("--out", type=Path, required=True)
    p_att.set_defaults(fn=cmd_inspect_attention)

    p_prior = sub.add_parser("export-prior", help="export the decoded prior tokens")
    p_prior.add_argument("--checkpoint", type=Path, required=True)
    p_prior.add_argument("--out", type=Path, required=True)
    p_prior.set_defaults(fn=cmd_export_prior)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surface a message, not a traceback, and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
