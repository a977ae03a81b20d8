"""Learnable score approximator and its training loop.

The network is a small time-conditioned 1-D encoder-decoder over the
station axis: stacked conv blocks with group normalization and SiLU,
strided-conv downsampling, nearest-neighbor upsampling with skip
connections, and circular padding everywhere so the loop closure of the
track is built in.  Diffusion time enters through Gaussian Fourier
features followed by a small MLP, added per block through learned
projections.

Training uses denoising score matching with the weighting
lambda(t) = 1 - beta_bar(t)^2 (the conditional variance), equivalent to
noise prediction, so per-time loss contributions stay O(1).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from diffplan.schedule import NoiseSchedule

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DPCKPT01"


@dataclass(frozen=True)
class ScoreNetConfig:
    channels: tuple = (32, 64, 128)
    kernel: int = 5
    groups: int = 8
    fourier_dim: int = 64
    time_dim: int = 128
    fourier_scale: float = 30.0

    def to_dict(self) -> dict:
        return {"channels": list(self.channels), "kernel": self.kernel,
                "groups": self.groups, "fourier_dim": self.fourier_dim,
                "time_dim": self.time_dim, "fourier_scale": self.fourier_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreNetConfig":
        return cls(channels=tuple(d["channels"]), kernel=int(d["kernel"]),
                   groups=int(d["groups"]), fourier_dim=int(d["fourier_dim"]),
                   time_dim=int(d["time_dim"]),
                   fourier_scale=float(d["fourier_scale"]))


class FourierTimeEmbedding(nn.Module):
    """sin/cos features of t at fixed random frequencies (scale 30).

    The frequencies are drawn once at initialization and persisted with
    the checkpoint, so the embedding is deterministic afterwards.
    """

    def __init__(self, fourier_dim: int, scale: float = 30.0):
        super().__init__()
        if fourier_dim % 2 != 0:
            raise ValueError("fourier_dim must be even")
        freqs = torch.randn(fourier_dim // 2) * scale
        self.register_buffer("frequencies", freqs)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        proj = t[:, None] * self.frequencies[None, :] * 2.0 * math.pi
        return torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)


def _conv(c_in, c_out, kernel, stride=1):
    return nn.Conv1d(c_in, c_out, kernel, stride=stride,
                     padding=kernel // 2, padding_mode="circular")


class ConvBlock(nn.Module):
    """conv-GN-SiLU twice with additive time injection and a skip."""

    def __init__(self, c_in, c_out, time_dim, kernel, groups):
        super().__init__()
        g1 = min(groups, c_out)
        self.conv1 = _conv(c_in, c_out, kernel)
        self.norm1 = nn.GroupNorm(g1, c_out)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.conv2 = _conv(c_out, c_out, kernel)
        self.norm2 = nn.GroupNorm(g1, c_out)
        self.skip = nn.Conv1d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, temb):
        h = self.act(self.norm1(self.conv1(x)))
        h = h + self.time_proj(temb)[:, :, None]
        h = self.act(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class ScoreNet(nn.Module):
    """Shape-preserving score network over (batch, 2, stations)."""

    def __init__(self, config: ScoreNetConfig | None = None):
        super().__init__()
        self.config = config or ScoreNetConfig()
        cfg = self.config
        ch = cfg.channels
        self.time_embed = FourierTimeEmbedding(cfg.fourier_dim, cfg.fourier_scale)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.fourier_dim, cfg.time_dim), nn.SiLU(),
            nn.Linear(cfg.time_dim, cfg.time_dim))
        self.stem = _conv(2, ch[0], cfg.kernel)
        self.down_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i in range(len(ch) - 1):
            self.down_blocks.append(
                ConvBlock(ch[i], ch[i], cfg.time_dim, cfg.kernel, cfg.groups))
            self.downs.append(_conv(ch[i], ch[i + 1], cfg.kernel, stride=2))
        self.mid = ConvBlock(ch[-1], ch[-1], cfg.time_dim, cfg.kernel, cfg.groups)
        self.ups = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for i in range(len(ch) - 1, 0, -1):
            self.ups.append(_conv(ch[i], ch[i - 1], cfg.kernel))
            self.up_blocks.append(
                ConvBlock(2 * ch[i - 1], ch[i - 1], cfg.time_dim, cfg.kernel,
                          cfg.groups))
        self.head = nn.Conv1d(ch[0], 2, 1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(x).all():
            raise ValueError("score network input contains non-finite values")
        if x.ndim != 3 or x.shape[1] != 2:
            raise ValueError("expected input of shape (batch, 2, stations)")
        depth = len(self.config.channels) - 1
        if x.shape[2] % (2**depth) != 0:
            raise ValueError(f"station count must be divisible by {2**depth}")
        t = torch.as_tensor(t, dtype=x.dtype, device=x.device)
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        temb = self.time_mlp(self.time_embed(t))
        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downs):
            h = block(h, temb)
            skips.append(h)
            h = down(h)
        h = self.mid(h, temb)
        for up, block in zip(self.ups, self.up_blocks):
            h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = up(h)
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        return self.head(h)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_network(config: ScoreNetConfig | None = None,
                  seed: int = 0) -> ScoreNet:
    """Deterministic network construction (weights and Fourier frequencies)."""
    torch.manual_seed(seed)
    return ScoreNet(config)


# -- denoising score matching ---------------------------------------------


def dsm_draws(x0: torch.Tensor, sched: NoiseSchedule,
              generator: torch.Generator, t_min: float = 1e-3):
    """Draw (t, x_t, target score, lambda) for a batch of clean samples."""
    if t_min <= 0.0:
        raise ValueError("t_min must be positive: the target score variance "
                         "diverges as t approaches 0")
    if x0.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    b = x0.shape[0]
    dtype = x0.dtype
    u = torch.rand(b, generator=generator, dtype=dtype)
    t = t_min + (1.0 - t_min) * u
    bbar = torch.exp(-(sched.r1 * t**3 / 3.0 + sched.r0 * t))
    lam = 1.0 - bbar**2
    noise = torch.randn(x0.shape, generator=generator, dtype=dtype)
    shape = (b,) + (1,) * (x0.ndim - 1)
    xt = bbar.view(shape) * x0 + torch.sqrt(lam).view(shape) * noise
    target = -noise / torch.sqrt(lam).view(shape)
    return t, xt, target, lam


def dsm_loss(score_fn, x0: torch.Tensor, sched: NoiseSchedule,
             generator: torch.Generator, t_min: float = 1e-3,
             return_parts: bool = False):
    """Weighted denoising score matching loss (per-coordinate mean).

    loss = mean_b mean_i lambda(t_b) (s(x_t, t)_i - target_i)^2 with
    lambda(t) = 1 - beta_bar(t)^2.  score_fn is the network or any
    callable (x_t, t) -> same-shape tensor.
    """
    t, xt, target, lam = dsm_draws(x0, sched, generator, t_min)
    pred = score_fn(xt, t)
    shape = (x0.shape[0],) + (1,) * (x0.ndim - 1)
    loss = torch.mean(lam.view(shape) * (pred - target) ** 2)
    if return_parts:
        return loss, (t, xt, target, lam)
    return loss


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 2e-4
    seed: int = 0
    t_min: float = 1e-3
    checkpoint_every: int = 0    # epochs; 0 writes only the final checkpoint
    out_dir: str | None = None


@dataclass
class TrainResult:
    history: list          # per-epoch mean loss
    diverged: bool = False
    checkpoint_path: str | None = None


def train(net: ScoreNet, data: np.ndarray, sched: NoiseSchedule,
          cfg: TrainConfig) -> TrainResult:
    """Train the score network; deterministic given the seed.

    data is (n, 2, N) in normalized units.  Emits per-epoch mean loss
    (and loss_history.csv when out_dir is given); checkpoints at the
    configured cadence.  On a non-finite loss the last checkpointed
    weights are restored and training stops early.
    """
    history: list[float] = []
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if cfg.epochs == 0:
        if out:
            _write_history(out / "loss_history.csv", history)
        return TrainResult(history=history)

    x_all = torch.as_tensor(np.asarray(data, dtype=np.float32))
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("training data is empty")
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=max(1, cfg.epochs * steps_per_epoch))

    last_good = {k: v.detach().clone() for k, v in net.state_dict().items()}
    diverged = False
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        epoch_losses = []
        for i in range(steps_per_epoch):
            idx = perm[i * cfg.batch_size:(i + 1) * cfg.batch_size]
            loss = dsm_loss(net, x_all[idx], sched, gen, cfg.t_min)
            if not torch.isfinite(loss):
                logger.warning("training diverged at epoch %d; restoring the "
                               "last checkpoint", epoch + 1)
                net.load_state_dict(last_good)
                diverged = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
            scheduler.step()
            epoch_losses.append(float(loss.detach()))
        if diverged:
            break
        history.append(float(np.mean(epoch_losses)))
        last_good = {k: v.detach().clone() for k, v in net.state_dict().items()}
        if out and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(net, out / f"checkpoint_epoch{epoch + 1:04d}.ckpt",
                            meta={"epoch": epoch + 1})
        if (epoch + 1) % max(1, cfg.epochs // 10) == 0 or epoch == 0:
            logger.info("epoch %d/%d: loss %.5f", epoch + 1, cfg.epochs,
                        history[-1])

    ckpt_path = None
    if out:
        ckpt_path = out / "checkpoint.ckpt"
        save_checkpoint(net, ckpt_path,
                        meta={"epochs": len(history), "diverged": diverged})
        _write_history(out / "loss_history.csv", history)
    return TrainResult(history=history, diverged=diverged,
                       checkpoint_path=str(ckpt_path) if ckpt_path else None)


def _write_history(path: Path, history):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(history, start=1):
            writer.writerow([i, repr(float(v))])


# -- checkpoint format ---------------------------------------------------


def save_checkpoint(net: ScoreNet, path, meta: dict | None = None):
    """Self-describing checkpoint: JSON header + little-endian f32 payload."""
    state = net.state_dict()
    tensors = []
    offset = 0
    blobs = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        blobs.append(arr.astype("<f4").tobytes(order="C"))
        tensors.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "numel": int(arr.size)})
        offset += arr.size * 4
    freqs = net.time_embed.frequencies.detach().cpu().numpy()
    header = {
        "format": "diffplan-scorenet",
        "version": 1,
        "config": net.config.to_dict(),
        "fourier_frequencies": [float(f) for f in freqs],
        "tensors": tensors,
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[ScoreNet, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a score network checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    net = ScoreNet(ScoreNetConfig.from_dict(header["config"]))
    state = {}
    for entry in header["tensors"]:
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=entry["numel"],
                            offset=start).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy())
    net.load_state_dict(state)
    freqs = torch.tensor(header["fourier_frequencies"], dtype=torch.float32)
    if not torch.equal(net.time_embed.frequencies, freqs):
        raise ValueError("checkpoint header frequencies disagree with payload")
    net.eval()
    return net, header["meta"]


# -- analytic oracles ------------------------------------------------------


@dataclass(frozen=True)
class AnalyticScoreOracle:
    """Exact score for Gaussian (or point-mass) data under the VP forward.

    score(x, t) = -(x - beta_bar m) / (s^2 beta_bar^2 + 1 - beta_bar^2).
    """

    mean: np.ndarray
    std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mean",
                           np.asarray(self.mean, dtype=np.float64))
        if self.std < 0.0:
            raise ValueError("std must be non-negative")


def oracle_score(oracle: AnalyticScoreOracle, x, t: float,
                 sched: NoiseSchedule) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if t == 0.0 and oracle.std == 0.0:
        raise ValueError("score of a point mass is singular at t = 0")
    bbar = float(sched.beta_bar(t))
    denom = oracle.std**2 * bbar**2 + 1.0 - bbar**2
    return -(x - bbar * oracle.mean) / denom


# -- adapters for the sampler ----------------------------------------------


def oracle_score_fn(oracle: AnalyticScoreOracle, sched: NoiseSchedule):
    """Batch score callable (x (B, d), t) -> (B, d) for the sampler."""
    def fn(x: np.ndarray, t: float) -> np.ndarray:
        return oracle_score(oracle, x, t, sched)
    return fn


def network_score_fn(net: ScoreNet, n_stations: int):
    """Wrap a trained network as a numpy score callable."""
    net.eval()

    def fn(x: np.ndarray, t: float) -> np.ndarray:
        xt = torch.as_tensor(np.asarray(x, dtype=np.float32)).reshape(
            -1, 2, n_stations)
        with torch.no_grad():
            out = net(xt, torch.full((xt.shape[0],), float(t),
                                     dtype=torch.float32))
        return out.reshape(x.shape[0], -1).double().numpy()
    return fn
