#!/usr/bin/env python3
"""Render the intermediate denoising states at t = 1, 0.591, 0.002 for a
scene, with and without barrier guidance, side by side as SVG."""

import argparse
from pathlib import Path

import numpy as np

from diffplan.dataset import load_dataset, sample_scene
from diffplan.harness.config import load_config
from diffplan.harness.figures import SNAPSHOT_TIMES, denoising_figure
from diffplan.harness.planner import DiffusionPlanner
from diffplan.sampler import sample
from diffplan.scorenet import load_checkpoint, network_score_fn
from diffplan.trajectory import NominalTrajectory


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--dataset", type=Path, required=True)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--out", type=Path, default=Path("out/snapshots"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--chains", type=int, default=6)
    args = parser.parse_args()

    cfg = load_config(args.config)
    bundle = load_dataset(args.dataset)
    net, _ = load_checkpoint(args.checkpoint)
    score_fn = network_score_fn(net, bundle.track.n_stations)
    nominal = NominalTrajectory(y_nom=bundle.nominal.y_nom,
                                phi_nom=bundle.nominal.phi_nom)
    rng = np.random.default_rng(args.seed + 424_242)
    scene = sample_scene(bundle.track, rng, lattice=cfg.lattice_config())
    args.out.mkdir(parents=True, exist_ok=True)

    for label, guided in (("with_barrier", True), ("without_barrier", False)):
        planner = DiffusionPlanner(cfg, bundle.track, nominal, score_fn,
                                   guidance=guided)
        scfg = planner.sampler_config(args.seed)
        _, diag = sample(scfg, scene=scene,
                         barrier_cfg=planner.barrier_cfg if guided else None,
                         count=args.chains,
                         dim=2 * bundle.track.n_stations,
                         snapshot_times=SNAPSHOT_TIMES)
        denoising_figure(scene, diag.snapshots, planner.phi_scale,
                         args.out / f"denoising_{label}.svg",
                         args.out / f"denoising_{label}.csv")
        print(f"wrote {args.out / f'denoising_{label}.svg'}")


if __name__ == "__main__":
    main()
