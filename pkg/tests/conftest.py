"""Shared fixtures: a tiny trained workspace, cached across test runs."""

import json
from pathlib import Path

import pytest

from diffplan.dataset import build_dataset, load_dataset, training_matrix
from diffplan.harness.config import config_from_dict, save_config
from diffplan.schedule import NoiseSchedule
from diffplan.scorenet import (
    ScoreNetConfig,
    TrainConfig,
    build_network,
    train,
)

CACHE_ROOT = Path(__file__).resolve().parent.parent / ".cache" / "tests"

# the coarsest grid that keeps Euler stable at beta(1) = 130 is a few
# hundred steps, so the tiny config keeps the production grid and shrinks
# everything else
TINY_CONFIG = {
    "track": {"kind": "ellipse", "params": {"a": 2.0, "b": 1.4},
              "half_width": 0.46, "n_stations": 32},
    "schedule": {"steps": 500},
    "sampler": {"warm_steps": 50},
    "data": {"base_count": 16, "augment_factor": 4,
             "lattice_lateral_samples": 11},
    "train": {"epochs": 500, "batch_size": 32, "channels": [16, 32],
              "kernel": 5, "groups": 4, "fourier_dim": 32, "time_dim": 32},
    "harness": {"laps": 1, "tracker_speed": 1.0, "sim_dt": 0.02,
                "replan_period": 0.4},
}


def build_workspace(config_dict: dict, workdir: Path, seed: int = 11) -> dict:
    """gen-data + train once; reused by harness and acceptance tests."""
    cfg = config_from_dict(json.loads(json.dumps(config_dict)))
    workdir.mkdir(parents=True, exist_ok=True)
    dataset_dir = workdir / "dataset"
    ckpt = workdir / "model" / "checkpoint.ckpt"
    cfg_path = workdir / "run_config.json"
    done = workdir / "DONE"
    if not done.exists():
        build_dataset(cfg.dataset_config(seed=seed), dataset_dir)
        bundle = load_dataset(dataset_dir)
        data = training_matrix(bundle)
        t = cfg.train
        net = build_network(
            ScoreNetConfig(channels=tuple(t.channels), kernel=t.kernel,
                           groups=t.groups, fourier_dim=t.fourier_dim,
                           time_dim=t.time_dim,
                           fourier_scale=t.fourier_scale), seed=seed)
        sched = NoiseSchedule(r1=cfg.schedule.r1, r0=cfg.schedule.r0)
        train(net, data, sched,
              TrainConfig(epochs=t.epochs, batch_size=t.batch_size,
                          seed=seed, out_dir=str(ckpt.parent)))
        save_config(cfg, cfg_path)
        done.write_text("ok")
    return {"config": cfg, "config_path": cfg_path,
            "dataset_dir": dataset_dir, "checkpoint": ckpt, "seed": seed}


# the acceptance workspace uses the production defaults: the 100 x 100
# dataset and the 500-epoch training run; first build takes ~30 minutes
# and is cached under .cache/acceptance afterwards
ACCEPTANCE_CONFIG: dict = {}
ACCEPTANCE_SEED = 2024


@pytest.fixture(scope="session")
def tiny_workspace():
    return build_workspace(TINY_CONFIG, CACHE_ROOT / "tiny")


@pytest.fixture(scope="session")
def acceptance_workspace():
    return build_workspace(ACCEPTANCE_CONFIG,
                           CACHE_ROOT.parent / "acceptance",
                           seed=ACCEPTANCE_SEED)
