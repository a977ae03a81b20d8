"""Track and obstacle geometry, Frenet transforms, constraint evaluation.

The track centerline is a closed curve interpolated from a polyline with
a periodic cubic spline parameterized by (chord-approximated) arc
length.  Trajectories are sampled at N uniform stations s_k = k L / N.
Obstacles and the vehicle are discs; obstacle clearance is computed in
global coordinates so that high track curvature does not distort the
safety envelope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from diffplan.errors import OutOfCorridorError
from diffplan.trajectory import TrajectorySample


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return np.arctan2(np.sin(a), np.cos(a))


class Track:
    """Closed track: centerline spline, constant half-width, N stations."""

    def __init__(self, centerline, half_width: float, n_stations: int = 128,
                 name: str = "track"):
        pts = np.asarray(centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ValueError("centerline must be an (n, 2) array with n >= 4")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if not half_width > 0.0:
            raise ValueError("half_width must be positive")
        if n_stations < 4:
            raise ValueError("need at least 4 stations")
        self.name = name
        self.half_width = float(half_width)
        self.n_stations = int(n_stations)
        self._points = pts

        closed = np.vstack([pts, pts[:1]])
        chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        if np.any(chord == 0.0):
            raise ValueError("centerline contains duplicate consecutive points")
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        self.length = float(knots[-1])
        self._spline = CubicSpline(knots, closed, bc_type="periodic", axis=0)
        self._dspline = self._spline.derivative(1)
        self._ddspline = self._spline.derivative(2)

        # dense table for nearest-point projection seeding
        n_dense = max(2048, 8 * pts.shape[0])
        self._dense_s = np.linspace(0.0, self.length, n_dense, endpoint=False)
        self._dense_xy = self._spline(self._dense_s)

        # per-station caches, reused heavily by constraint evaluation
        self.stations = np.arange(self.n_stations) * self.length / self.n_stations
        self.station_xy = self._spline(self.stations)
        d = self._dspline(self.stations)
        self.station_heading = np.arctan2(d[:, 1], d[:, 0])
        self.station_normal = np.stack(
            [-np.sin(self.station_heading), np.cos(self.station_heading)], axis=1)
        self.station_spacing = self.length / self.n_stations
        for arr in (self.stations, self.station_xy, self.station_heading,
                    self.station_normal):
            arr.setflags(write=False)

    # -- centerline queries -------------------------------------------------

    def position(self, s):
        return self._spline(np.mod(s, self.length))

    def heading(self, s):
        d = self._dspline(np.mod(s, self.length))
        return np.arctan2(d[..., 1], d[..., 0])

    def normal(self, s):
        """Left unit normal (lateral offsets are positive to the left)."""
        h = self.heading(s)
        return np.stack([-np.sin(h), np.cos(h)], axis=-1)

    def curvature(self, s):
        sm = np.mod(s, self.length)
        d = self._dspline(sm)
        dd = self._ddspline(sm)
        num = d[..., 0] * dd[..., 1] - d[..., 1] * dd[..., 0]
        den = (d[..., 0] ** 2 + d[..., 1] ** 2) ** 1.5
        return num / den

    def project(self, point) -> float:
        """Arc length of the closest centerline point.

        Seeds from a dense table (ties resolve to the smallest s because
        argmin returns the first minimum) and refines with Newton steps
        on the stationarity condition (P(s) - q) . P'(s) = 0.
        """
        q = np.asarray(point, dtype=np.float64)
        d2 = np.sum((self._dense_xy - q) ** 2, axis=1)
        s = float(self._dense_s[int(np.argmin(d2))])
        for _ in range(60):
            p = self._spline(np.mod(s, self.length))
            dp = self._dspline(np.mod(s, self.length))
            ddp = self._ddspline(np.mod(s, self.length))
            r = p - q
            g = float(r @ dp)
            h = float(dp @ dp + r @ ddp)
            if h <= 0.0:
                h = float(dp @ dp)
            step = g / h
            s -= step
            if abs(step) < 1e-13 * max(self.length, 1.0):
                break
        return float(np.mod(s, self.length))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "half_width": self.half_width,
            "centerline": [[float(z), float(y)] for z, y in self._points],
        }


def global_to_frenet(track: Track, point, yaw: float) -> "FrenetPose":
    """Project a global pose into the Frenet frame of the track."""
    q = np.asarray(point, dtype=np.float64)
    s = track.project(q)
    p = track.position(s)
    dist = float(np.linalg.norm(q - p))
    if dist > 2.0 * track.half_width:
        raise OutOfCorridorError(
            f"point {q.tolist()} is {dist:.3f} m from the centerline "
            f"(limit {2.0 * track.half_width:.3f} m)")
    n = track.normal(s)
    y = float((q - p) @ n)
    phi = float(wrap_angle(yaw - track.heading(s)))
    return FrenetPose(s=s, y_hat=y, phi_hat=phi)


def frenet_to_global(track: Track, pose: "FrenetPose"):
    """Inverse of global_to_frenet; wraps around the seam at s = L."""
    p = track.position(pose.s) + pose.y_hat * track.normal(pose.s)
    yaw = float(wrap_angle(track.heading(pose.s) + pose.phi_hat))
    return p, yaw


@dataclass(frozen=True)
class FrenetPose:
    """Arc length s, lateral offset y_hat (left positive), relative yaw."""

    s: float
    y_hat: float
    phi_hat: float


@dataclass(frozen=True)
class Obstacle:
    """Disc obstacle; velocity is zero for static obstacles."""

    center: tuple
    radius: float
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("obstacle radius must be positive")
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "velocity",
                           (float(self.velocity[0]), float(self.velocity[1])))

    def position_at(self, query_time: float, ref_time: float):
        c = np.array(self.center)
        v = np.array(self.velocity)
        return c + v * (query_time - ref_time)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius,
                "velocity": list(self.velocity)}

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(center=tuple(d["center"]), radius=float(d["radius"]),
                   velocity=tuple(d.get("velocity", (0.0, 0.0))))


@dataclass(frozen=True)
class Scene:
    """Track plus a time-stamped obstacle set and vehicle footprint.

    Obstacle centers are their positions at the scene clock tau; at query
    time t they sit at center + velocity (t - tau).
    """

    track: Track
    obstacles: tuple = ()
    tau: float = 0.0
    vehicle_radius: float = 0.09
    safety_margin: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.track.half_width > self.vehicle_radius:
            raise ValueError("half_width must exceed the vehicle radius")

    @property
    def usable_half_width(self) -> float:
        return self.track.half_width - self.vehicle_radius - self.safety_margin

    def obstacle_positions(self, query_time: float) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 2))
        return np.stack([o.position_at(query_time, self.tau) for o in self.obstacles])

    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.obstacles], dtype=np.float64)

    def with_obstacles(self, obstacles, tau=None) -> "Scene":
        return Scene(track=self.track, obstacles=tuple(obstacles),
                     tau=self.tau if tau is None else float(tau),
                     vehicle_radius=self.vehicle_radius,
                     safety_margin=self.safety_margin)

    def to_dict(self, track_ref: str = "") -> dict:
        return {
            "track_ref": track_ref,
            "obstacles": [o.to_dict() for o in self.obstacles],
            "vehicle_radius": self.vehicle_radius,
            "safety_margin": self.safety_margin,
            "tau": self.tau,
        }


# -- constraint evaluation ----------------------------------------------------


def constraint_matrix(scene: Scene, y_hat, query_time: float) -> np.ndarray:
    """Constraint components for lateral offsets at every station.

    y_hat has shape (..., N); the result has shape (..., N, 1 + J) where
    component 0 is the track bound |y| - (w - r_v - margin) and component
    1 + j is (r_j + r_v + margin) - distance to obstacle j.  A component
    is satisfied iff it is <= 0.
    """
    y = np.asarray(y_hat, dtype=np.float64)
    track = scene.track
    if y.shape[-1] != track.n_stations:
        raise ValueError("trajectory station count does not match the track")
    c_track = np.abs(y) - scene.usable_half_width
    comps = [c_track[..., None]]
    if scene.obstacles:
        pos = track.station_xy + y[..., None] * track.station_normal  # (..., N, 2)
        obs = scene.obstacle_positions(query_time)                    # (J, 2)
        radii = scene.obstacle_radii()
        dist = np.linalg.norm(pos[..., None, :] - obs, axis=-1)       # (..., N, J)
        envelope = radii + scene.vehicle_radius + scene.safety_margin
        comps.append(envelope - dist)
    return np.concatenate(comps, axis=-1)


def constraint_values(scene: Scene, station: int, y_hat: float,
                      query_time: float) -> np.ndarray:
    """Constraint components at one station (see constraint_matrix)."""
    n = scene.track.n_stations
    if not 0 <= station < n:
        raise ValueError(f"station index {station} outside [0, {n})")
    y = np.zeros(n)
    y[station] = y_hat
    return constraint_matrix(scene, y, query_time)[station]


def penetration_profile(scene: Scene, y_hat, query_time: float,
                        lse_temp: float = 0.02) -> np.ndarray:
    """Soft maximum of the constraint components at every station.

    Log-sum-exp with temperature T: within [max, max + T ln(count)] of the
    exact maximum, so it is conservative and its sign agrees with the
    exact maximum whenever |max| > T ln(count).
    """
    if not lse_temp > 0.0:
        raise ValueError("lse_temp must be positive")
    c = constraint_matrix(scene, y_hat, query_time)
    m = np.max(c, axis=-1)
    return m + lse_temp * np.log(
        np.sum(np.exp((c - m[..., None]) / lse_temp), axis=-1))


def penetration(scene: Scene, station: int, y_hat: float, query_time: float,
                lse_temp: float = 0.02) -> float:
    n = scene.track.n_stations
    if not 0 <= station < n:
        raise ValueError(f"station index {station} outside [0, {n})")
    y = np.zeros(n)
    y[station] = y_hat
    return float(penetration_profile(scene, y, query_time, lse_temp)[station])


def feasible(scene: Scene, traj: TrajectorySample, query_time: float) -> np.ndarray:
    """Exact per-station feasibility of a physical-unit trajectory."""
    if traj.n_stations != scene.track.n_stations:
        raise ValueError("trajectory station count does not match the track")
    c = constraint_matrix(scene, traj.y_hat, query_time)
    return np.max(c, axis=-1) <= 0.0


def min_obstacle_clearance(scene: Scene, points: np.ndarray,
                           query_time: float) -> float:
    """Smallest disc-to-disc clearance between points and any obstacle."""
    if not scene.obstacles:
        return np.inf
    obs = scene.obstacle_positions(query_time)
    radii = scene.obstacle_radii()
    dist = np.linalg.norm(points[:, None, :] - obs, axis=-1) - radii
    return float(np.min(dist))


# -- built-in parametric tracks ----------------------------------------------


def ellipse_track(a: float = 2.6, b: float = 1.7, half_width: float = 0.46,
                  n_stations: int = 128, n_points: int = 512) -> Track:
    """Ellipse with semi-axes (a, b), traversed counterclockwise."""
    th = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    pts = np.stack([a * np.cos(th), b * np.sin(th)], axis=1)
    return Track(pts, half_width, n_stations, name=f"ellipse-{a}x{b}")


def rounded_rect_track(width: float = 5.0, height: float = 3.0,
                       corner_radius: float = 0.9, half_width: float = 0.46,
                       n_stations: int = 128, n_points: int = 512) -> Track:
    """Rectangle with quarter-circle corners, counterclockwise."""
    if corner_radius * 2.0 >= min(width, height):
        raise ValueError("corner radius too large for the rectangle")
    w2, h2, r = width / 2.0, height / 2.0, corner_radius
    straight_x = width - 2.0 * r
    straight_y = height - 2.0 * r
    perim = 2.0 * straight_x + 2.0 * straight_y + 2.0 * np.pi * r

    def point_at(u):
        # u in [0, perim) starting at (w2 - r ... ) bottom edge, ccw
        u = np.mod(u, perim)
        if u < straight_x:
            return (-w2 + r + u, -h2)
        u -= straight_x
        if u < np.pi * r / 2.0:
            a = u / r
            return (w2 - r + r * np.sin(a), -h2 + r - r * np.cos(a))
        u -= np.pi * r / 2.0
        if u < straight_y:
            return (w2, -h2 + r + u)
        u -= straight_y
        if u < np.pi * r / 2.0:
            a = u / r
            return (w2 - r + r * np.cos(a), h2 - r + r * np.sin(a))
        u -= np.pi * r / 2.0
        if u < straight_x:
            return (w2 - r - u, h2)
        u -= straight_x
        if u < np.pi * r / 2.0:
            a = u / r
            return (-w2 + r - r * np.sin(a), h2 - r + r * np.cos(a))
        u -= np.pi * r / 2.0
        if u < straight_y:
            return (-w2, h2 - r - u)
        u -= straight_y
        a = u / r
        return (-w2 + r - r * np.cos(a), -h2 + r - r * np.sin(a))

    us = np.linspace(0.0, perim, n_points, endpoint=False)
    pts = np.array([point_at(u) for u in us])
    return Track(pts, half_width, n_stations,
                 name=f"rounded-rect-{width}x{height}")


TRACK_BUILDERS = {
    "ellipse": ellipse_track,
    "rounded_rect": rounded_rect_track,
}


def build_track(kind: str, half_width: float = 0.46, n_stations: int = 128,
                **params) -> Track:
    if kind not in TRACK_BUILDERS:
        raise ValueError(f"unknown track kind {kind!r}; "
                         f"choices: {sorted(TRACK_BUILDERS)}")
    return TRACK_BUILDERS[kind](half_width=half_width, n_stations=n_stations,
                                **params)


# -- file interfaces ----------------------------------------------------------


def track_to_file(track: Track, path):
    Path(path).write_text(json.dumps(track.to_dict()), encoding="utf-8")


def track_from_file(path, n_stations: int = 128) -> Track:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return Track(np.asarray(d["centerline"], dtype=np.float64),
                 half_width=float(d["half_width"]),
                 n_stations=n_stations, name=str(d.get("name", "track")))


def scene_to_file(scene: Scene, path, track_ref: str = ""):
    Path(path).write_text(json.dumps(scene.to_dict(track_ref)), encoding="utf-8")


def scene_from_file(path, track: Track | None = None,
                    n_stations: int = 128) -> Scene:
    p = Path(path)
    d = json.loads(p.read_text(encoding="utf-8"))
    if track is None:
        ref = d.get("track_ref", "")
        if not ref:
            raise ValueError("scene file has no track_ref and no track given")
        track = track_from_file((p.parent / ref).resolve(), n_stations=n_stations)
    return Scene(
        track=track,
        obstacles=tuple(Obstacle.from_dict(o) for o in d.get("obstacles", ())),
        tau=float(d.get("tau", 0.0)),
        vehicle_radius=float(d.get("vehicle_radius", 0.09)),
        safety_margin=float(d.get("safety_margin", 0.02)),
    )
