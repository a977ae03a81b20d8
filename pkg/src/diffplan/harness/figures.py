"""SVG and CSV emission: track, obstacles, plans, denoising snapshots.

SVG 1.1 is written directly (no plotting library) so the bytes are a
pure function of the data.  Every plotted series is also written as CSV.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from diffplan.geometry import Scene, Track

SNAPSHOT_TIMES = (1.0, 0.591, 0.002)


def _f(x: float) -> str:
    return f"{x:.6f}"


class SvgCanvas:
    def __init__(self, bounds, size=640, margin=0.3):
        (x0, y0), (x1, y1) = bounds
        self.x0, self.y0 = x0 - margin, y0 - margin
        self.x1, self.y1 = x1 + margin, y1 + margin
        self.scale = size / max(self.x1 - self.x0, self.y1 - self.y0)
        self.width = (self.x1 - self.x0) * self.scale
        self.height = (self.y1 - self.y0) * self.scale
        self.parts = []

    def _pt(self, p):
        # flip y so +y points up
        return ((p[0] - self.x0) * self.scale,
                self.height - (p[1] - self.y0) * self.scale)

    def polyline(self, points, color="black", width=1.5, dashed=False,
                 closed=False):
        pts = [self._pt(p) for p in points]
        if closed:
            pts.append(pts[0])
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}"{dash}/>')

    def circle(self, center, radius, color="gray", fill="gray"):
        x, y = self._pt(center)
        self.parts.append(
            f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(radius * self.scale)}" '
            f'stroke="{color}" fill="{fill}" fill-opacity="0.5"/>')

    def text(self, pos, s, size=14):
        x, y = self._pt(pos)
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
            f'font-family="sans-serif">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{_f(self.width)}" height="{_f(self.height)}" '
                f'viewBox="0 0 {_f(self.width)} {_f(self.height)}">')
        return head + "".join(self.parts) + "</svg>"


def _track_bounds(track: Track):
    lo = track.station_xy.min(axis=0) - track.half_width
    hi = track.station_xy.max(axis=0) + track.half_width
    return (lo[0], lo[1]), (hi[0], hi[1])


def _draw_track(canvas: SvgCanvas, track: Track):
    s = np.linspace(0.0, track.length, 400, endpoint=False)
    center = track.position(s)
    normal = track.normal(s)
    canvas.polyline(center, color="#bbbbbb", width=1.0, dashed=True,
                    closed=True)
    for side in (+1.0, -1.0):
        canvas.polyline(center + side * track.half_width * normal,
                        color="black", width=2.0, closed=True)


def _plan_xy(track: Track, y_hat: np.ndarray) -> np.ndarray:
    return track.station_xy + np.asarray(y_hat)[:, None] * track.station_normal


def scene_figure(scene: Scene, plans: dict, out_svg, out_csv=None):
    """Track outline, obstacles and labeled plan polylines."""
    track = scene.track
    canvas = SvgCanvas(_track_bounds(track))
    _draw_track(canvas, track)
    for obs in scene.obstacles:
        moving = obs.velocity != (0.0, 0.0)
        canvas.circle(obs.center, obs.radius,
                      color="black", fill="#333333" if moving else "#999999")
    palette = ("#c62828", "#1565c0", "#2e7d32", "#ef6c00", "#6a1b9a")
    for i, (label, y_hat) in enumerate(sorted(plans.items())):
        canvas.polyline(_plan_xy(track, y_hat),
                        color=palette[i % len(palette)], width=2.0,
                        closed=True)
    Path(out_svg).write_text(canvas.render(), encoding="utf-8")
    if out_csv is not None:
        write_plan_csv(out_csv, track, plans)


def write_plan_csv(path, track: Track, plans: dict):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "station", "s", "y_hat", "z", "y"])
        for label, y_hat in sorted(plans.items()):
            xy = _plan_xy(track, y_hat)
            for k in range(track.n_stations):
                writer.writerow([label, k, repr(float(track.stations[k])),
                                 repr(float(y_hat[k])),
                                 repr(float(xy[k, 0])), repr(float(xy[k, 1]))])


def denoising_figure(scene: Scene, snapshots: dict, phi_scale: float,
                     out_svg, out_csv=None):
    """Chain states at the representative denoising times, one panel each."""
    track = scene.track
    n = track.n_stations
    panels = []
    for t_snap in sorted(snapshots, reverse=True):
        canvas = SvgCanvas(_track_bounds(track))
        _draw_track(canvas, track)
        for obs in scene.obstacles:
            canvas.circle(obs.center, obs.radius)
        batch = np.atleast_2d(snapshots[t_snap])
        for vec in batch:
            y = np.clip(vec[:n], -3.0, 3.0) * track.half_width
            canvas.polyline(_plan_xy(track, y), color="#c62828", width=1.0,
                            closed=True)
        canvas.text((canvas.x0 + 0.4, canvas.y1 - 0.4), f"t = {t_snap}")
        panels.append(canvas.render())
    combined = ('<svg xmlns="http://www.w3.org/2000/svg" version="1.1">'
                + "".join(f'<g transform="translate(0,{i * 700})">{p}</g>'
                          for i, p in enumerate(panels))
                + "</svg>")
    Path(out_svg).write_text(combined, encoding="utf-8")
    if out_csv is not None:
        with Path(out_csv).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "chain", "station", "y_norm", "phi_norm"])
            for t_snap in sorted(snapshots, reverse=True):
                batch = np.atleast_2d(snapshots[t_snap])
                for c, vec in enumerate(batch):
                    for k in range(n):
                        writer.writerow([repr(float(t_snap)), c, k,
                                         repr(float(vec[k])),
                                         repr(float(vec[n + k]))])


def trace_figure(scene: Scene, trace: list, out_svg, out_csv=None):
    """Vehicle path and all plans from a closed-loop trace."""
    track = scene.track
    canvas = SvgCanvas(_track_bounds(track))
    _draw_track(canvas, track)
    states = [ev for ev in trace if ev["type"] == "state"]
    plans = [ev for ev in trace if ev["type"] == "plan"]
    if states:
        last_obs = states[-1].get("obstacles", [])
        for obs in last_obs:
            canvas.circle(tuple(obs["center"]), obs["radius"])
    for i, ev in enumerate(plans):
        canvas.polyline(_plan_xy(track, np.array(ev["y_hat"])),
                        color="#f48fb1" if i + 1 < len(plans) else "#c62828",
                        width=1.0, closed=True)
    if states:
        path = np.array([ev["position"] for ev in states])
        canvas.polyline(path, color="#1565c0", width=2.0)
    for ev in trace:
        if ev["type"] == "collision":
            canvas.circle(tuple(ev["position"]), 0.05, color="red", fill="red")
    Path(out_svg).write_text(canvas.render(), encoding="utf-8")
    if out_csv is not None:
        with Path(out_csv).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sim_time", "z", "y", "heading"])
            for ev in states:
                writer.writerow([repr(float(ev["sim_time"])),
                                 repr(float(ev["position"][0])),
                                 repr(float(ev["position"][1])),
                                 repr(float(ev["heading"]))])
