"""Command line interface.

Subcommands: gen-data, train, sample, simulate, bench-warm, bench-opt,
plot.  Shared flags: --config <file>, --seed <u64>, --out <dir>.  Exit
codes: 0 success, 2 infeasible or invalid input, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from diffplan.dataset import build_dataset, load_dataset
from diffplan.errors import InfeasibleSceneError, OutOfCorridorError
from diffplan.geometry import Scene, scene_from_file
from diffplan.harness.bench import (
    bench_optimality,
    bench_warm_start,
    write_json,
    write_table,
)
from diffplan.harness.config import RunConfig, load_config, save_config
from diffplan.harness.figures import (
    SNAPSHOT_TIMES,
    denoising_figure,
    scene_figure,
    trace_figure,
)
from diffplan.harness.planner import DiffusionPlanner, plan_seed
from diffplan.harness.scenario import Scenario, scenario_from_file
from diffplan.harness.simulate import (
    ClosedLoopConfig,
    read_trace,
    simulate,
    write_report,
)
from diffplan.sampler import config_digest, write_diagnostics, write_plan
from diffplan.schedule import NoiseSchedule
from diffplan.scorenet import (
    ScoreNetConfig,
    TrainConfig,
    build_network,
    load_checkpoint,
    network_score_fn,
    train,
)
from diffplan.trajectory import NominalTrajectory

logger = logging.getLogger("diffplan")


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, default=None,
                        help="run configuration JSON")
    parser.add_argument("--seed", type=_u64, default=0, help="master seed")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in u64")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffplan",
        description="barrier-guided diffusion trajectory planner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="build the expert dataset")
    _common(p)

    p = sub.add_parser("train", help="train the score network")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)

    p = sub.add_parser("sample", help="generate plans for a scene")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True,
                   help="dataset dir (track + nominal trajectory)")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene", type=Path, default=None,
                   help="scene JSON; defaults to the empty scene")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--unguided", action="store_true")
    p.add_argument("--snapshots", action="store_true",
                   help="emit intermediate denoising figures")
    p.add_argument("--verbose-diagnostics", action="store_true")

    p = sub.add_parser("simulate", help="closed-loop run on a scenario")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene", type=Path, default=None)
    p.add_argument("--scenario", type=Path, default=None)

    p = sub.add_parser("bench-warm", help="warm vs cold start comparison")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene", type=Path, default=None)
    p.add_argument("--scenario", type=Path, default=None)
    p.add_argument("--runs", type=int, default=20)

    p = sub.add_parser("bench-opt", help="near-optimality vs lattice oracle")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scenes", type=int, default=50)

    p = sub.add_parser("plot", help="render figures from a trace or plan")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--trace", type=Path, default=None)
    p.add_argument("--scene", type=Path, default=None)
    return parser


def _load_bundle_and_planner(args, cfg: RunConfig, guidance=True):
    bundle = load_dataset(args.dataset)
    net, _ = load_checkpoint(args.checkpoint)
    score_fn = network_score_fn(net, bundle.track.n_stations)
    nominal = NominalTrajectory(y_nom=bundle.nominal.y_nom,
                                phi_nom=bundle.nominal.phi_nom)
    planner = DiffusionPlanner(cfg, bundle.track, nominal, score_fn,
                               guidance=guidance)
    return bundle, planner


def _scene(args, bundle) -> Scene:
    if getattr(args, "scene", None):
        return scene_from_file(args.scene, track=bundle.track)
    return Scene(track=bundle.track,
                 vehicle_radius=float(bundle.manifest["vehicle_radius"]),
                 safety_margin=float(bundle.manifest["safety_margin"]))


def _scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        return scenario_from_file(args.scenario)
    return Scenario(events=())


def cmd_gen_data(args, cfg: RunConfig) -> int:
    dcfg = cfg.dataset_config(seed=args.seed)
    manifest = build_dataset(dcfg, args.out)
    save_config(cfg, args.out / "run_config.json")
    print(json.dumps(manifest["counts"], sort_keys=True))
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    bundle = load_dataset(args.dataset)
    from diffplan.dataset import training_matrix
    data = training_matrix(bundle)
    if data.shape[0] == 0:
        raise InfeasibleSceneError("dataset has no training records")
    t = cfg.train
    net_cfg = ScoreNetConfig(channels=tuple(t.channels), kernel=t.kernel,
                             groups=t.groups, fourier_dim=t.fourier_dim,
                             time_dim=t.time_dim,
                             fourier_scale=t.fourier_scale)
    net = build_network(net_cfg, seed=args.seed)
    sched = NoiseSchedule(r1=cfg.schedule.r1, r0=cfg.schedule.r0)
    result = train(net, data, sched,
                   TrainConfig(epochs=t.epochs, batch_size=t.batch_size,
                               lr=t.lr, seed=args.seed, t_min=t.t_min,
                               checkpoint_every=t.checkpoint_every,
                               out_dir=str(args.out)))
    print(json.dumps({"epochs": len(result.history),
                      "final_loss": result.history[-1] if result.history else None,
                      "diverged": result.diverged}, sort_keys=True))
    return 0


def cmd_sample(args, cfg: RunConfig) -> int:
    bundle, planner = _load_bundle_and_planner(args, cfg,
                                               guidance=not args.unguided)
    scene = _scene(args, bundle)
    args.out.mkdir(parents=True, exist_ok=True)
    digest = config_digest(cfg.to_dict())
    count = args.count or cfg.harness.sample_count

    verbose = args.verbose_diagnostics
    if args.snapshots:
        result = planner.plan_cold(scene, plan_seed(args.seed, "sample", 0),
                                   snapshot_times=SNAPSHOT_TIMES,
                                   verbose=verbose)
        denoising_figure(scene, result.diagnostics.snapshots,
                         planner.phi_scale,
                         args.out / "denoising.svg",
                         args.out / "denoising.csv")
        results = [result]
        for i in range(1, count):
            results.append(planner.plan_cold(
                scene, plan_seed(args.seed, "sample", i), verbose=verbose))
    else:
        results = [planner.plan_cold(scene, plan_seed(args.seed, "sample", i),
                                     verbose=verbose)
                   for i in range(count)]
    plans = {}
    for i, result in enumerate(results):
        write_plan(args.out / f"plan_{i:03d}.json", bundle.track,
                   result.trajectory, scene.tau, digest)
        plans[f"plan_{i:03d}"] = result.trajectory.y_hat
        if args.verbose_diagnostics and result.diagnostics.rows:
            write_diagnostics(args.out / f"plan_{i:03d}_steps.csv",
                              result.diagnostics)
    scene_figure(scene, plans, args.out / "plans.svg", args.out / "plans.csv")
    feasible_n = sum(r.feasible for r in results)
    print(json.dumps({"plans": len(results), "feasible": feasible_n},
                     sort_keys=True))
    return 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    bundle, planner = _load_bundle_and_planner(args, cfg)
    scene = _scene(args, bundle)
    scenario = _scenario(args)
    h = cfg.harness
    loop = ClosedLoopConfig(replan_period=h.replan_period,
                            tracker_speed=h.tracker_speed,
                            tracker_lookahead=h.tracker_lookahead,
                            sim_dt=h.sim_dt, laps=h.laps,
                            warm_start=h.warm_start)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = simulate(planner, scene, scenario, loop, args.seed,
                      trace_path=args.out / "trace.jsonl")
    wall = time.perf_counter() - t0
    write_report(report, args.out,
                 wall_time_s=wall)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_bench_warm(args, cfg: RunConfig) -> int:
    bundle, planner = _load_bundle_and_planner(args, cfg)
    scene = _scene(args, bundle)
    scenario = _scenario(args)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = bench_warm_start(planner, scene, scenario,
                              seeds=[plan_seed(args.seed, "bench-warm", i)
                                     for i in range(args.runs)],
                              replan_period=cfg.harness.replan_period)
    wall = time.perf_counter() - t0
    write_table(args.out / "warm_start.csv", result["rows"],
                ["seed", "mode", "score_evals_per_plan", "feasible_fraction",
                 "mean_displacement"])
    summary = {k: v for k, v in result.items() if k != "rows"}
    write_json(args.out / "warm_start.json", summary)
    (args.out / "timing.json").write_text(json.dumps({"wall_time_s": wall}),
                                          encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_bench_opt(args, cfg: RunConfig) -> int:
    bundle, planner = _load_bundle_and_planner(args, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = bench_optimality(
        planner, bundle.track, cfg.lattice_config(),
        seeds=[plan_seed(args.seed, "bench-opt", i)
               for i in range(args.scenes)],
        vehicle_radius=cfg.data.vehicle_radius,
        safety_margin=cfg.data.safety_margin)
    wall = time.perf_counter() - t0
    write_table(args.out / "optimality.csv", result["rows"],
                ["label", "seed", "plan_length", "oracle_length", "ratio",
                 "feasible"])
    summary = {k: v for k, v in result.items() if k != "rows"}
    write_json(args.out / "optimality.json", summary)
    (args.out / "timing.json").write_text(json.dumps({"wall_time_s": wall}),
                                          encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_plot(args, cfg: RunConfig) -> int:
    bundle = load_dataset(args.dataset)
    scene = _scene(args, bundle)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.trace is None:
        raise OutOfCorridorError("plot needs --trace")
    trace = read_trace(args.trace)
    trace_figure(scene, trace, args.out / "trace.svg", args.out / "trace.csv")
    print(json.dumps({"events": len(trace)}, sort_keys=True))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "bench-warm": cmd_bench_warm,
    "bench-opt": cmd_bench_opt,
    "plot": cmd_plot,
}

INPUT_ERRORS = (InfeasibleSceneError, OutOfCorridorError, FileNotFoundError,
                json.JSONDecodeError, ValueError, KeyError)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except INPUT_ERRORS as exc:
        logger.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
