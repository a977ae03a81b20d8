"""Run configuration: one JSON file drives every CLI command.

Sections mirror the package modules (schedule, barrier, sampler, data,
train, harness); unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from diffplan.dataset import DatasetConfig, LatticeConfig


@dataclass
class ScheduleSection:
    r1: float = 100.0
    r0: float = 30.0
    h1: float = 1.0
    h2: float = 50.0
    h3: float = 0.7
    steps: int = 500
    warp: float = 2.2


@dataclass
class BarrierSection:
    alpha: float = 0.4
    epsilon: float = 16.0
    kappa: float = 100.0
    ramp: float = 50.0
    margin: float = 0.03
    lse_temp: float = 0.02
    phi_scale: float = 0.6


@dataclass
class SamplerSection:
    eta: float = 0.1
    clip_bound: float = 1e3
    warm_steps: int = 50
    warm_start_time: float | None = None  # default: grid-tail entry point


@dataclass
class TrackSection:
    kind: str = "rounded_rect"
    params: dict = field(default_factory=dict)
    half_width: float = 0.46
    n_stations: int = 128
    file: str | None = None  # overrides kind/params when set


@dataclass
class DataSection:
    base_count: int = 100
    augment_factor: int = 100
    split_ratio: float = 0.8
    obstacle_count: tuple = (1, 4)
    radius_rel: tuple = (0.05, 0.15)
    redundant_count: tuple = (1, 5)
    vehicle_radius: float = 0.09
    safety_margin: float = 0.02
    lattice_lateral_samples: int = 13
    lattice_smoothing_weight: float = 0.5
    lattice_clearance_margin: float = 0.03
    lattice_curvature_weight: float = 2.0
    lattice_offset_weight: float = 0.05


@dataclass
class TrainSection:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 2e-4
    t_min: float = 1e-3
    checkpoint_every: int = 0
    channels: tuple = (32, 64, 128)
    kernel: int = 5
    groups: int = 8
    fourier_dim: int = 64
    time_dim: int = 128
    fourier_scale: float = 30.0


@dataclass
class HarnessSection:
    replan_period: float = 0.4
    tracker_speed: float = 1.0
    tracker_lookahead: float = 0.22
    sim_dt: float = 0.02
    laps: int = 3
    warm_start: bool = True
    sample_count: int = 1


@dataclass
class RunConfig:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    barrier: BarrierSection = field(default_factory=BarrierSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    track: TrackSection = field(default_factory=TrackSection)
    data: DataSection = field(default_factory=DataSection)
    train: TrainSection = field(default_factory=TrainSection)
    harness: HarnessSection = field(default_factory=HarnessSection)

    def to_dict(self) -> dict:
        def enc(x):
            if dataclasses.is_dataclass(x):
                return {f.name: enc(getattr(x, f.name))
                        for f in dataclasses.fields(x)}
            if isinstance(x, tuple):
                return list(x)
            return x
        return enc(self)

    def dataset_config(self, seed: int) -> DatasetConfig:
        t, d = self.track, self.data
        return DatasetConfig(
            track_kind=t.kind, track_params=dict(t.params),
            half_width=t.half_width, n_stations=t.n_stations,
            base_count=d.base_count, augment_factor=d.augment_factor,
            split_ratio=d.split_ratio, seed=seed,
            vehicle_radius=d.vehicle_radius, safety_margin=d.safety_margin,
            obstacle_count=tuple(d.obstacle_count),
            radius_rel=tuple(d.radius_rel),
            redundant_count=tuple(d.redundant_count),
            phi_scale=self.barrier.phi_scale,
            saturation_band=self.barrier.margin + 3.0 / self.barrier.kappa,
            lattice=self.lattice_config())

    def lattice_config(self) -> LatticeConfig:
        d = self.data
        return LatticeConfig(
            lateral_samples=d.lattice_lateral_samples,
            smoothing_weight=d.lattice_smoothing_weight,
            clearance_margin=d.lattice_clearance_margin,
            curvature_weight=d.lattice_curvature_weight,
            offset_weight=d.lattice_offset_weight)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _merge_section(obj, values: dict, path: str):
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, val in values.items():
        if key not in names:
            raise ValueError(f"unknown config key {path}.{key}")
        current = getattr(obj, key)
        if isinstance(current, tuple):
            val = tuple(val)
        setattr(obj, key, val)
    return obj


def config_from_dict(d: dict) -> RunConfig:
    cfg = RunConfig()
    for section, values in d.items():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ValueError(f"config section {section!r} must be an object")
        _merge_section(getattr(cfg, section), values, section)
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_config(cfg: RunConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1),
                          encoding="utf-8")
