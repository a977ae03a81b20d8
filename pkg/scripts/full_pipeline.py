#!/usr/bin/env python3
"""End-to-end demo at reduced scale: dataset, training, plans, closed loop.

Runs the same CLI entry points a user would, into ./out/demo by default.
Takes a few minutes on a laptop; pass --full for the paper-scale settings
(100 x 100 dataset, 500 epochs; expect ~30 minutes of training).
"""

import argparse
import json
import sys
from pathlib import Path

from diffplan.harness.cli import main as cli

DEMO_CONFIG = {
    "track": {"kind": "rounded_rect", "half_width": 0.46, "n_stations": 64},
    "data": {"base_count": 30, "augment_factor": 10},
    "train": {"epochs": 120, "channels": [32, 64], "time_dim": 64},
    "harness": {"laps": 1},
}


def run(argv):
    print("+ diffplan " + " ".join(argv))
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("out/demo"))
    parser.add_argument("--seed", default="7")
    parser.add_argument("--full", action="store_true",
                        help="use the full-scale default configuration")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg_path = args.out / "config.json"
    cfg_path.write_text(json.dumps({} if args.full else DEMO_CONFIG, indent=1))
    dataset = args.out / "dataset"
    model = args.out / "model"

    run(["gen-data", "--config", str(cfg_path), "--seed", args.seed,
         "--out", str(dataset)])
    run(["train", "--config", str(cfg_path), "--seed", args.seed,
         "--dataset", str(dataset), "--out", str(model)])
    run(["sample", "--config", str(cfg_path), "--seed", args.seed,
         "--dataset", str(dataset),
         "--checkpoint", str(model / "checkpoint.ckpt"),
         "--count", "3", "--snapshots", "--out", str(args.out / "plans")])
    run(["simulate", "--config", str(cfg_path), "--seed", args.seed,
         "--dataset", str(dataset),
         "--checkpoint", str(model / "checkpoint.ckpt"),
         "--out", str(args.out / "sim")])
    run(["plot", "--dataset", str(dataset),
         "--trace", str(args.out / "sim" / "trace.jsonl"),
         "--out", str(args.out / "figures")])
    run(["bench-warm", "--config", str(cfg_path), "--seed", args.seed,
         "--dataset", str(dataset),
         "--checkpoint", str(model / "checkpoint.ckpt"),
         "--runs", "5", "--out", str(args.out / "bench_warm")])
    run(["bench-opt", "--config", str(cfg_path), "--seed", args.seed,
         "--dataset", str(dataset),
         "--checkpoint", str(model / "checkpoint.ckpt"),
         "--scenes", "15", "--out", str(args.out / "bench_opt")])
    print(f"demo artifacts under {args.out}")


if __name__ == "__main__":
    main()
