"""Barrier potential steering the guided reverse SDE.

Per station k the potential is

    alpha * [ sigmoid(kappa * pen_k) + (ramp / kappa) softplus(kappa * pen_k) ]
      + (epsilon / 2) (y_k - y_nom,k)^2
      + (epsilon / 2) (phi_k - phi_nom,k)^2

summed over stations, where pen_k is the soft maximum (log-sum-exp) of
the constraint components in meters, shifted by a planning margin:
pen_k = penetration_k + margin.  The two obstacle terms replace a hard
infeasibility indicator: the logistic step carries the indicator's
[0, alpha] jump across the boundary, and the softplus ramp keeps a
constant outward slope alpha * ramp deep inside the infeasible set, where
a pure sigmoid would plateau and stop expelling captured samples.  Both
terms underflow identically on the feasible side, so for shifted
penetrations below -36 / kappa the potential equals the quadratic part
exactly.  The margin (default 3 cm) moves the guided rest point away
from the exact constraint boundary, buying slack for replanning wobble,
obstacle motion between ticks, and tracking error; the exact feasibility
checks elsewhere never see it.

The quadratic terms measure deviations from the nominal line in physical
units (meters and radians); kappa defaults to 100 / m, making the
saturation band 3 / kappa = 3 cm.

The sampler state is normalized (y / half_width, phi / phi_scale); both
functions below take normalized trajectories and convert internally, and
the gradient is with respect to the normalized coordinates.  The tilt's
normalization constant is never computed; it vanishes in the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from diffplan.geometry import Scene
from diffplan.trajectory import NominalTrajectory, TrajectorySample


@dataclass(frozen=True)
class BarrierConfig:
    alpha: float = 0.4
    epsilon: float = 16.0
    kappa: float = 100.0
    ramp: float = 50.0
    margin: float = 0.03
    lse_temp: float = 0.02
    phi_scale: float = 0.6
    nominal: NominalTrajectory = None

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not self.kappa > 0.0:
            raise ValueError("kappa must be positive")
        if self.ramp < 0.0:
            raise ValueError("ramp must be non-negative")
        if self.margin < 0.0:
            raise ValueError("margin must be non-negative")
        if not self.lse_temp > 0.0:
            raise ValueError("lse_temp must be positive")
        if not self.phi_scale > 0.0:
            raise ValueError("phi_scale must be positive")
        if self.nominal is None:
            raise ValueError("a nominal trajectory is required")


def _split(batch_vec: np.ndarray, n: int):
    y = batch_vec[..., :n]
    phi = batch_vec[..., n:]
    return y, phi


def _check_lengths(cfg: BarrierConfig, scene: Scene, n: int):
    if n != scene.track.n_stations:
        raise ValueError("trajectory station count does not match the track")
    if cfg.nominal.n_stations != n:
        raise ValueError("nominal trajectory station count does not match")


def _soft_parts(cfg: BarrierConfig, scene: Scene, y_phys: np.ndarray,
                query_time: float):
    """Penetration, softmax weights and physical positions per station."""
    from diffplan.geometry import constraint_matrix

    c = constraint_matrix(scene, y_phys, query_time)          # (..., N, C)
    m = np.max(c, axis=-1, keepdims=True)
    w = np.exp((c - m) / cfg.lse_temp)
    w_sum = np.sum(w, axis=-1, keepdims=True)
    pen = m[..., 0] + cfg.lse_temp * np.log(w_sum[..., 0])
    weights = w / w_sum
    return c, pen, weights


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.where(z > 30.0, z, np.log1p(np.exp(np.minimum(z, 30.0))))


def barrier_value_batch(cfg: BarrierConfig, scene: Scene, x: np.ndarray,
                        query_time: float) -> np.ndarray:
    """Barrier value for a batch of normalized state vectors (B, 2N)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1] // 2
    _check_lengths(cfg, scene, n)
    y_n, phi_n = _split(x, n)
    hw = scene.track.half_width
    y = y_n * hw
    phi = phi_n * cfg.phi_scale
    _, pen, _ = _soft_parts(cfg, scene, y, query_time)
    z = cfg.kappa * (pen + cfg.margin)
    obstacle_term = cfg.alpha * (expit(z) + (cfg.ramp / cfg.kappa) * _softplus(z))
    dy = y - cfg.nominal.y_nom
    dphi = phi - cfg.nominal.phi_nom
    quad = 0.5 * cfg.epsilon * (dy**2 + dphi**2)
    return np.sum(obstacle_term + quad, axis=-1)


def barrier_grad_batch(cfg: BarrierConfig, scene: Scene, x: np.ndarray,
                       query_time: float) -> np.ndarray:
    """Exact gradient of barrier_value_batch w.r.t. normalized coordinates."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1] // 2
    _check_lengths(cfg, scene, n)
    y_n, phi_n = _split(x, n)
    hw = scene.track.half_width
    y = y_n * hw
    phi = phi_n * cfg.phi_scale

    _, pen, weights = _soft_parts(cfg, scene, y, query_time)
    sig = expit(cfg.kappa * (pen + cfg.margin))
    # d/dpen of sigmoid(kappa pen') + (ramp/kappa) softplus(kappa pen')
    dobst_dpen = sig * (1.0 - sig) * cfg.kappa + cfg.ramp * sig

    # d pen / d y (physical): softmax-weighted sum of component slopes
    dtrack = np.sign(y)                                        # (..., N)
    dpen_dy = weights[..., 0] * dtrack
    if scene.obstacles:
        track = scene.track
        pos = track.station_xy + y[..., None] * track.station_normal
        obs = scene.obstacle_positions(query_time)
        diff = pos[..., None, :] - obs                          # (..., N, J, 2)
        dist = np.linalg.norm(diff, axis=-1)
        dist = np.maximum(dist, 1e-12)
        # c_obs = envelope - dist, so dc/dy = -(diff . normal) / dist
        proj = np.einsum("...njc,nc->...nj", diff, track.station_normal)
        dpen_dy = dpen_dy + np.sum(weights[..., 1:] * (-proj / dist), axis=-1)

    grad_y_phys = cfg.alpha * dobst_dpen * dpen_dy \
        + cfg.epsilon * (y - cfg.nominal.y_nom)
    grad_phi_phys = cfg.epsilon * (phi - cfg.nominal.phi_nom)

    # chain through the unit normalization
    return np.concatenate([grad_y_phys * hw, grad_phi_phys * cfg.phi_scale],
                          axis=-1)


def barrier_value(cfg: BarrierConfig, scene: Scene, traj: TrajectorySample,
                  query_time: float) -> float:
    """Barrier value of one normalized trajectory."""
    return float(barrier_value_batch(cfg, scene, traj.as_vector(), query_time))


def barrier_grad(cfg: BarrierConfig, scene: Scene, traj: TrajectorySample,
                 query_time: float) -> np.ndarray:
    """Gradient of the barrier w.r.t. all 2N normalized coordinates."""
    return barrier_grad_batch(cfg, scene, traj.as_vector(), query_time)
