"""Benchmarks: warm-start comparison and near-optimality vs the lattice oracle."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from diffplan.dataset import LatticeConfig, plan_expert, sample_scene
from diffplan.errors import InfeasibleSceneError
from diffplan.geometry import Scene, Track
from diffplan.harness.planner import DiffusionPlanner, plan_seed
from diffplan.harness.scenario import ObstaclePool, Scenario
from diffplan.harness.simulate import _displacement, plan_points
from diffplan.trajectory import TrajectorySample


def arc_length(track: Track, traj: TrajectorySample) -> float:
    """Closed-loop arc length of the plan polyline in global coordinates."""
    pts = plan_points(track, traj)
    return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def bench_warm_start(planner: DiffusionPlanner, base_scene: Scene,
                     scenario: Scenario, seeds, replan_period: float = 0.4,
                     ticks: int = 6) -> dict:
    """Paired cold (full grid) vs warm (tail) runs on matched obstacle
    sequences; reports feasibility, plan-to-plan displacement and the
    exact score-evaluation ratio."""
    track = planner.track
    rows = []
    for seed in seeds:
        for mode in ("cold", "warm"):
            pool = ObstaclePool(scenario)
            pool.advance(0.0, 0.0)
            sim_time = 0.0
            current = None
            evals = 0
            feasible_count = 0
            disps = []
            for tick in range(ticks):
                scene = base_scene.with_obstacles(pool.obstacles(),
                                                  tau=sim_time)
                if tick == 0 or mode == "cold":
                    result = planner.plan_cold(scene,
                                               plan_seed(seed, mode, tick))
                else:
                    result = planner.plan_warm(scene,
                                               plan_seed(seed, mode, tick),
                                               current.normalized)
                if tick > 0:
                    evals += result.diagnostics.score_evals
                    feasible_count += int(result.feasible)
                    disps.append(_displacement(track, current.trajectory,
                                               result.trajectory))
                current = result
                sim_time += replan_period
                pool.advance(sim_time, replan_period)
            rows.append({
                "seed": seed, "mode": mode,
                "score_evals_per_plan": evals // max(ticks - 1, 1),
                "feasible_fraction": feasible_count / max(ticks - 1, 1),
                "mean_displacement": float(np.mean(disps)) if disps else 0.0,
            })

    cold = [r for r in rows if r["mode"] == "cold"]
    warm = [r for r in rows if r["mode"] == "warm"]
    cold_evals = cold[0]["score_evals_per_plan"]
    warm_evals = warm[0]["score_evals_per_plan"]
    return {
        "rows": rows,
        "cold_evals_per_plan": cold_evals,
        "warm_evals_per_plan": warm_evals,
        "eval_ratio": cold_evals / warm_evals,
        "cold_feasible_fraction": float(np.mean(
            [r["feasible_fraction"] for r in cold])),
        "warm_feasible_fraction": float(np.mean(
            [r["feasible_fraction"] for r in warm])),
        "cold_mean_displacement": float(np.mean(
            [r["mean_displacement"] for r in cold])),
        "warm_mean_displacement": float(np.mean(
            [r["mean_displacement"] for r in warm])),
    }


def bench_optimality(planner: DiffusionPlanner, track: Track,
                     lattice: LatticeConfig, seeds,
                     vehicle_radius: float = 0.09,
                     safety_margin: float = 0.02,
                     include_empty: bool = True) -> dict:
    """Guided plan arc length over the lattice shortest-feasible oracle."""
    rows = []
    skipped = 0
    if include_empty:
        empty = Scene(track=track, vehicle_radius=vehicle_radius,
                      safety_margin=safety_margin)
        rows.append(_optimality_row(planner, empty, lattice, seed=0,
                                    label="empty"))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        try:
            scene = sample_scene(track, rng, vehicle_radius, safety_margin,
                                 obstacle_count=(1, 1), lattice=lattice)
            rows.append(_optimality_row(planner, scene, lattice, seed,
                                        label="single-obstacle"))
        except InfeasibleSceneError:
            skipped += 1
    ratios = [r["ratio"] for r in rows if r["label"] == "single-obstacle"]
    out = {
        "rows": rows,
        "skipped": skipped,
        "median_ratio": float(np.median(ratios)) if ratios else None,
        "oracle_self_ratio": 1.0,
    }
    empty_rows = [r for r in rows if r["label"] == "empty"]
    if empty_rows:
        out["empty_scene_ratio"] = empty_rows[0]["ratio"]
    return out


def _optimality_row(planner: DiffusionPlanner, scene: Scene,
                    lattice: LatticeConfig, seed: int, label: str) -> dict:
    oracle_traj = plan_expert(scene, lattice)
    oracle_len = arc_length(scene.track, oracle_traj)
    result = planner.plan_cold(scene, plan_seed(seed, "bench-opt"))
    plan_len = arc_length(scene.track, result.trajectory)
    return {
        "label": label, "seed": seed,
        "plan_length": plan_len, "oracle_length": oracle_len,
        "ratio": plan_len / oracle_len,
        "feasible": result.feasible,
    }


def write_table(path, rows: list, columns: list):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1),
                          encoding="utf-8")
