"""Assembles schedule, barrier, score source and sampler into a planner."""

from __future__ import annotations

from dataclasses import dataclass


import numpy as np

from diffplan.barrier import BarrierConfig
from diffplan.dataset import denormalize
from diffplan.geometry import Scene, Track, feasible, wrap_angle
from diffplan.harness.config import RunConfig
from diffplan.sampler import (
    Diagnostics,
    SamplerConfig,
    WarmStartConfig,
    sample,
    warm_start_sample,
)
from diffplan.schedule import GuidanceSchedule, NoiseSchedule, make_grid
from diffplan.trajectory import NominalTrajectory, TrajectorySample


@dataclass
class PlanResult:
    trajectory: TrajectorySample        # physical units, phi wrapped
    normalized: TrajectorySample        # sampler-space output for warm starts
    feasible: bool
    mode: str                           # "cold" or "warm"
    diagnostics: Diagnostics


class DiffusionPlanner:
    """Generates plans from a score source under barrier guidance."""

    def __init__(self, run_cfg: RunConfig, track: Track,
                 nominal: NominalTrajectory, score_fn, guidance: bool = True):
        s = run_cfg.schedule
        self.run_cfg = run_cfg
        self.track = track
        self.noise = NoiseSchedule(r1=s.r1, r0=s.r0)
        self.guidance = GuidanceSchedule(h1=s.h1, h2=s.h2, h3=s.h3) \
            if guidance else None
        self.grid = make_grid(s.steps, s.warp)
        self.score_fn = score_fn
        b = run_cfg.barrier
        self.barrier_cfg = BarrierConfig(
            alpha=b.alpha, epsilon=b.epsilon, kappa=b.kappa, ramp=b.ramp,
            margin=b.margin, lse_temp=b.lse_temp, phi_scale=b.phi_scale,
            nominal=nominal)
        self.phi_scale = b.phi_scale

    def sampler_config(self, seed: int) -> SamplerConfig:
        return SamplerConfig(noise=self.noise, grid=self.grid,
                             score_fn=self.score_fn,
                             eta=self.run_cfg.sampler.eta,
                             guidance=self.guidance, seed=seed,
                             clip_bound=self.run_cfg.sampler.clip_bound)

    def _finish(self, vec: np.ndarray, scene: Scene, mode: str,
                diag: Diagnostics) -> PlanResult:
        norm = TrajectorySample.from_vector(vec)
        phys = denormalize(norm, self.track, self.phi_scale)
        phys = TrajectorySample(y_hat=phys.y_hat,
                                phi_hat=wrap_angle(phys.phi_hat))
        ok = bool(np.all(feasible(scene, phys, scene.tau)))
        return PlanResult(trajectory=phys, normalized=norm, feasible=ok,
                          mode=mode, diagnostics=diag)

    def plan_cold(self, scene: Scene, seed: int, snapshot_times=(),
                  verbose: bool = False) -> PlanResult:
        cfg = self.sampler_config(seed)
        out, diag = sample(cfg, scene=scene, barrier_cfg=self.barrier_cfg,
                           count=1, dim=2 * self.track.n_stations,
                           snapshot_times=snapshot_times, verbose=verbose)
        return self._finish(out[0], scene, "cold", diag)

    def plan_warm(self, scene: Scene, seed: int, previous: TrajectorySample,
                  verbose: bool = False) -> PlanResult:
        cfg = self.sampler_config(seed)
        warm = WarmStartConfig(source=previous,
                               steps=self.run_cfg.sampler.warm_steps,
                               start_time=self.run_cfg.sampler.warm_start_time)
        vec, diag = warm_start_sample(cfg, warm, scene=scene,
                                      barrier_cfg=self.barrier_cfg,
                                      verbose=verbose)
        return self._finish(vec, scene, "warm", diag)

    def plan_batch(self, scene: Scene, seed: int, count: int):
        """Cold-start a batch of plans; returns (PlanResult list, diag)."""
        cfg = self.sampler_config(seed)
        out, diag = sample(cfg, scene=scene, barrier_cfg=self.barrier_cfg,
                           count=count, dim=2 * self.track.n_stations)
        return [self._finish(v, scene, "cold", Diagnostics()) for v in out], diag


def plan_seed(master_seed: int, purpose: str, index: int = 0) -> int:
    """Stable per-purpose sub-seed derivation."""
    import hashlib
    h = hashlib.sha256(f"{master_seed}:{purpose}:{index}".encode()).digest()
    return int.from_bytes(h[:8], "little")
