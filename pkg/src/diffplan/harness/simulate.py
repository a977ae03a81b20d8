"""Closed-loop racing simulation with a pure-pursuit unicycle tracker.

At every replan tick the planner sees a frozen snapshot of the obstacle
set (no motion prediction); between ticks the tracker follows the latest
plan at constant speed, blind to obstacles.  Collisions are judged by an
exact geometric check that shares no code with the barrier, so the
safety metric is not self-certified by the guidance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from diffplan.geometry import Scene, Track, feasible, wrap_angle
from diffplan.harness.planner import DiffusionPlanner, PlanResult, plan_seed
from diffplan.harness.scenario import ObstaclePool, Scenario
from diffplan.trajectory import TrajectorySample


@dataclass
class ClosedLoopConfig:
    replan_period: float = 0.4
    tracker_speed: float = 1.0
    tracker_lookahead: float = 0.22
    sim_dt: float = 0.02
    laps: int = 3
    warm_start: bool = True

    def __post_init__(self):
        if not self.replan_period > 0.0:
            raise ValueError("replan_period must be positive")
        if not 0.0 < self.sim_dt <= self.replan_period:
            raise ValueError("sim_dt must lie in (0, replan_period]")


@dataclass
class BenchReport:
    collision_count: int = 0
    feasible_plan_fraction: float = 0.0
    mean_plan_displacement: float = 0.0
    path_length_ratio: float | None = None
    score_evals_cold: int = 0
    score_evals_warm: int = 0
    plans: int = 0
    fallbacks: int = 0
    laps_completed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "collision_count": self.collision_count,
            "feasible_plan_fraction": self.feasible_plan_fraction,
            "mean_plan_displacement": self.mean_plan_displacement,
            "path_length_ratio": self.path_length_ratio,
            "score_evals_cold": self.score_evals_cold,
            "score_evals_warm": self.score_evals_warm,
            "plans": self.plans,
            "fallbacks": self.fallbacks,
            "laps_completed": self.laps_completed,
        }

    def validate(self):
        if not 0.0 <= self.feasible_plan_fraction <= 1.0:
            raise ValueError("feasible_plan_fraction outside [0, 1]")
        if self.collision_count < 0:
            raise ValueError("negative collision count")


class PurePursuitTracker:
    """Kinematic unicycle following a closed plan at constant speed."""

    def __init__(self, track: Track, speed: float, lookahead: float):
        self.track = track
        self.speed = speed
        self.lookahead = lookahead
        self.position = None
        self.heading = None
        self._progress_idx = 0

    def reset(self, plan_points: np.ndarray):
        self.position = plan_points[0].copy()
        d = plan_points[1] - plan_points[0]
        self.heading = float(np.arctan2(d[1], d[0]))
        self._progress_idx = 0

    def _nearest_index(self, pts: np.ndarray) -> int:
        n = len(pts)
        window = np.arange(self._progress_idx - 2, self._progress_idx + 6) % n
        d = np.linalg.norm(pts[window] - self.position, axis=1)
        return int(window[int(np.argmin(d))])

    def _lookahead_point(self, pts: np.ndarray) -> np.ndarray:
        n = len(pts)
        i = self._nearest_index(pts)
        self._progress_idx = i
        acc = 0.0
        p = pts[i]
        for step in range(1, n):
            q = pts[(i + step) % n]
            seg = float(np.linalg.norm(q - p))
            if acc + seg >= self.lookahead:
                u = (self.lookahead - acc) / max(seg, 1e-12)
                return p + u * (q - p)
            acc += seg
            p = q
        return pts[i]

    def step(self, pts: np.ndarray, dt: float):
        target = self._lookahead_point(pts)
        to_target = target - self.position
        alpha = wrap_angle(np.arctan2(to_target[1], to_target[0]) - self.heading)
        omega = 2.0 * self.speed * np.sin(alpha) / self.lookahead
        self.heading = float(wrap_angle(self.heading + omega * dt))
        self.position = self.position + self.speed * dt * np.array(
            [np.cos(self.heading), np.sin(self.heading)])


def plan_points(track: Track, traj: TrajectorySample) -> np.ndarray:
    return track.station_xy + traj.y_hat[:, None] * track.station_normal


def _displacement(track: Track, a: TrajectorySample,
                  b: TrajectorySample) -> float:
    """Mean per-station distance between two plans (meters)."""
    return float(np.mean(np.linalg.norm(plan_points(track, a)
                                        - plan_points(track, b), axis=1)))


def simulate(planner: DiffusionPlanner, base_scene: Scene, scenario: Scenario,
             cfg: ClosedLoopConfig, seed: int,
             trace_path=None) -> BenchReport:
    """Run the closed loop for the configured number of laps."""
    track = planner.track
    pool = ObstaclePool(scenario)
    pool.advance(0.0, 0.0)
    tracker = PurePursuitTracker(track, cfg.tracker_speed, cfg.tracker_lookahead)

    trace = []
    report = BenchReport()
    displacements = []
    feasible_plans = 0
    sim_time = 0.0
    tick = 0

    def scene_now():
        return base_scene.with_obstacles(pool.obstacles(), tau=sim_time)

    scene = scene_now()
    result = planner.plan_cold(scene, plan_seed(seed, "plan", tick))
    report.plans += 1
    report.score_evals_cold += result.diagnostics.score_evals
    feasible_plans += int(result.feasible)
    current = result
    previous_traj = None
    trace.append(_plan_event(sim_time, result))
    tracker.reset(plan_points(track, current.trajectory))

    lap_progress = 0.0
    prev_s = float(track.project(tracker.position))
    next_replan = cfg.replan_period
    max_time = 3.0 * cfg.laps * track.length / cfg.tracker_speed + 10.0
    in_collision = False

    while lap_progress < cfg.laps * track.length and sim_time < max_time:
        sim_time += cfg.sim_dt
        pool.advance(sim_time, cfg.sim_dt)
        tracker.step(plan_points(track, current.trajectory), cfg.sim_dt)

        s = float(track.project(tracker.position))
        ds = (s - prev_s) % track.length
        if ds < track.length / 2:
            lap_progress += ds
        prev_s = s

        # exact collision check, independent of the barrier
        hit = False
        centerline = track.position(s)
        lateral = float(np.linalg.norm(tracker.position - centerline))
        if lateral > track.half_width - base_scene.vehicle_radius:
            hit = True
        for obs in pool.obstacles():
            gap = float(np.linalg.norm(tracker.position - np.array(obs.center)))
            if gap < obs.radius + base_scene.vehicle_radius:
                hit = True
        if hit and not in_collision:
            report.collision_count += 1
            trace.append({"type": "collision", "sim_time": round(sim_time, 9),
                          "position": tracker.position.tolist()})
        in_collision = hit

        if sim_time + 1e-9 >= next_replan:
            next_replan += cfg.replan_period
            tick += 1
            scene = scene_now()
            previous_traj = current.trajectory
            if cfg.warm_start:
                result = planner.plan_warm(scene, plan_seed(seed, "plan", tick),
                                           current.normalized)
                report.score_evals_warm += result.diagnostics.score_evals
            else:
                result = planner.plan_cold(scene, plan_seed(seed, "plan", tick))
                report.score_evals_cold += result.diagnostics.score_evals
            report.plans += 1
            feasible_plans += int(result.feasible)
            if result.feasible:
                current = result
            else:
                # keep the previous plan only while it is itself still
                # feasible under the new scene; a stale infeasible plan is
                # worse than a marginally infeasible fresh one
                prev_ok = bool(np.all(feasible(scene, current.trajectory,
                                               scene.tau)))
                report.fallbacks += 1
                trace.append({"type": "fallback",
                              "sim_time": round(sim_time, 9),
                              "kept_previous": prev_ok})
                if not prev_ok:
                    current = result
            trace.append(_plan_event(sim_time, result))
            if previous_traj is not None and result.feasible:
                displacements.append(
                    _displacement(track, previous_traj, result.trajectory))

        if tick % 1 == 0:
            trace.append({
                "type": "state", "sim_time": round(sim_time, 9),
                "position": tracker.position.tolist(),
                "heading": tracker.heading,
                "obstacles": [o.to_dict() for o in pool.obstacles()],
            })

    report.feasible_plan_fraction = feasible_plans / max(report.plans, 1)
    report.mean_plan_displacement = float(np.mean(displacements)) \
        if displacements else 0.0
    report.laps_completed = lap_progress / track.length
    report.validate()
    if trace_path is not None:
        write_trace(trace_path, trace)
    return report


def _plan_event(sim_time: float, result: PlanResult) -> dict:
    return {
        "type": "plan", "sim_time": round(sim_time, 9), "mode": result.mode,
        "feasible": result.feasible,
        "score_evals": result.diagnostics.score_evals,
        "y_hat": result.trajectory.y_hat.tolist(),
        "phi_hat": result.trajectory.phi_hat.tolist(),
    }


def write_trace(path, events: list):
    with Path(path).open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")


def read_trace(path) -> list:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_report(report: BenchReport, out_dir, wall_time_s: float | None = None):
    """report.json is deterministic; wall-time fields go to timing.json only."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=1),
        encoding="utf-8")
    if wall_time_s is not None:
        (out / "timing.json").write_text(json.dumps({
            "wall_time_s": wall_time_s,
            "wall_time_per_plan_s": wall_time_s / max(report.plans, 1),
        }, sort_keys=True), encoding="utf-8")
