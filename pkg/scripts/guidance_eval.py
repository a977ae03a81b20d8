#!/usr/bin/env python3
"""Measure guided vs unguided feasibility over random held-out scenes.

Useful when tuning barrier settings (kappa, ramp) against a trained
checkpoint: prints the feasible fraction per arm and the gap, and can
sweep overrides from the command line.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from diffplan.dataset import load_dataset, sample_scene
from diffplan.harness.config import load_config
from diffplan.harness.planner import DiffusionPlanner, plan_seed
from diffplan.scorenet import load_checkpoint, network_score_fn
from diffplan.trajectory import NominalTrajectory


def evaluate(planner, track, lattice, n_scenes, chains, scene_seed):
    ok = tot = 0
    for i in range(n_scenes):
        rng = np.random.default_rng(scene_seed + i)
        scene = sample_scene(track, rng, lattice=lattice)
        results, _ = planner.plan_batch(scene, plan_seed(55, "eval", i), chains)
        ok += sum(r.feasible for r in results)
        tot += len(results)
    return ok / tot


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--dataset", type=Path, required=True)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--scenes", type=int, default=50)
    parser.add_argument("--chains", type=int, default=4)
    parser.add_argument("--scene-seed", type=int, default=778_899)
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--ramp", type=float, default=None)
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.kappa is not None:
        cfg.barrier.kappa = args.kappa
    if args.ramp is not None:
        cfg.barrier.ramp = args.ramp
    bundle = load_dataset(args.dataset)
    net, _ = load_checkpoint(args.checkpoint)
    score_fn = network_score_fn(net, bundle.track.n_stations)
    nominal = NominalTrajectory(y_nom=bundle.nominal.y_nom,
                                phi_nom=bundle.nominal.phi_nom)
    lattice = cfg.lattice_config()

    fractions = {}
    for label, guided in (("guided", True), ("unguided", False)):
        planner = DiffusionPlanner(cfg, bundle.track, nominal, score_fn,
                                   guidance=guided)
        t0 = time.time()
        fractions[label] = evaluate(planner, bundle.track, lattice,
                                    args.scenes, args.chains, args.scene_seed)
        print(f"{label:9s}: feasible {fractions[label]:.3f} "
              f"({time.time() - t0:.0f}s)")
    print(f"gap: {fractions['guided'] - fractions['unguided']:.3f}")


if __name__ == "__main__":
    main()
