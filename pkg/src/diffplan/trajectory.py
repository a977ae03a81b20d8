"""Trajectory containers shared by the geometry, barrier and sampler code.

A trajectory is N stations of (lateral offset, relative yaw) in the
Frenet frame of a track.  The same container is used for physical-unit
trajectories (meters / radians) and for the normalized coordinates the
diffusion operates on; the caller owns the convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrajectorySample:
    """N stations of (y_hat, phi_hat); the diffusion state has d = 2N."""

    y_hat: np.ndarray
    phi_hat: np.ndarray

    def __post_init__(self):
        y = _frozen_array(self.y_hat, "y_hat")
        phi = _frozen_array(self.phi_hat, "phi_hat")
        if y.size != phi.size:
            raise ValueError("y_hat and phi_hat must have the same length")
        object.__setattr__(self, "y_hat", y)
        object.__setattr__(self, "phi_hat", phi)

    @property
    def n_stations(self) -> int:
        return self.y_hat.size

    @property
    def dim(self) -> int:
        return 2 * self.y_hat.size

    def as_vector(self) -> np.ndarray:
        """Flatten to [y_0..y_{N-1}, phi_0..phi_{N-1}]."""
        return np.concatenate([self.y_hat, self.phi_hat])

    @classmethod
    def from_vector(cls, vec) -> "TrajectorySample":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0:
            raise ValueError("vector length must be even")
        n = vec.size // 2
        return cls(y_hat=vec[:n], phi_hat=vec[n:])


@dataclass(frozen=True)
class NominalTrajectory:
    """Obstacle-free reference line, in physical units (meters / radians)."""

    y_nom: np.ndarray
    phi_nom: np.ndarray

    def __post_init__(self):
        y = _frozen_array(self.y_nom, "y_nom")
        phi = _frozen_array(self.phi_nom, "phi_nom")
        if y.size != phi.size:
            raise ValueError("y_nom and phi_nom must have the same length")
        object.__setattr__(self, "y_nom", y)
        object.__setattr__(self, "phi_nom", phi)

    @property
    def n_stations(self) -> int:
        return self.y_nom.size
