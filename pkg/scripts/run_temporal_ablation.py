#!/usr/bin/env python3
"""Compare acceleration error of the image-only model against the two temporal
modeling modes (whole-pose and per-joint) on held-out synthetic clips,
averaged over seeds. Training targets carry per-frame jitter; see
tokmesh.ablation for the exact protocol.
"""

import argparse
import time

from tokmesh.ablation import AblationSettings, run_temporal_ablation


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--jitter-sigma", type=float, default=0.05)
    args = parser.parse_args()

    settings = AblationSettings(seeds=tuple(args.seeds), jitter_sigma=args.jitter_sigma)
    start = time.time()
    outcome = run_temporal_ablation(settings)
    means = outcome.means()

    print(f"finished in {time.time() - start:.0f}s over seeds {args.seeds}")
    print(f"{'mode':<14}{'accel (units/frame^2)':>24}   per-seed")
    for name, per_seed in (
        ("image-only", outcome.accel_image),
        ("whole-pose", outcome.accel_whole_pose),
        ("per-joint", outcome.accel_per_joint),
    ):
        key = name.replace("image-only", "image").replace("-", "_")
        print(f"{name:<14}{means[key]:>24.4f}   {[round(v, 4) for v in per_seed]}")
    improved = means["per_joint"] < means["image"] and means["per_joint"] <= means["whole_pose"]
    print("per-joint temporal modeling wins:" , improved)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
