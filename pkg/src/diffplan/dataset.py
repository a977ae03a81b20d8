"""Expert dataset construction at desk scale.

Expert trajectories come from a lattice shortest-path planner over the
station grid: lateral offsets are discretized into an odd number of
levels, edges connect neighboring stations with a bounded level jump,
and the edge cost is the flattened-map arc length hypot(ds, dy) plus a
curvature-change penalty on the second difference of y.  In this metric
the centerline is the unique shortest closed path of an empty scene, so
the nominal trajectory is y = 0, phi = 0.  The shortest cyclic path is
found by pinning the path at an anchor station (the station with the
largest obstacle clearance) and enumerating the wrap jump.

Datasets are expanded by redundant-obstacle augmentation: obstacles
placed far enough from an expert path provably leave the lattice optimum
unchanged, so augmented records clone the expert trajectory bitwise.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from diffplan.errors import InfeasibleSceneError
from diffplan.geometry import Obstacle, Scene, Track, build_track
from diffplan.trajectory import NominalTrajectory, TrajectorySample

logger = logging.getLogger(__name__)

JUMP_LIMIT = 2  # max lateral level change per station step


@dataclass(frozen=True)
class LatticeConfig:
    lateral_samples: int = 13
    smoothing_weight: float = 0.5
    clearance_margin: float = 0.03
    curvature_weight: float = 2.0
    offset_weight: float = 0.05

    def __post_init__(self):
        if self.lateral_samples < 3 or self.lateral_samples % 2 == 0:
            raise ValueError("lateral_samples must be odd and >= 3")
        if not 0.0 <= self.smoothing_weight <= 1.0:
            raise ValueError("smoothing_weight must lie in [0, 1]")
        if self.clearance_margin < 0.0:
            raise ValueError("clearance_margin must be non-negative")
        if self.offset_weight < 0.0:
            raise ValueError("offset_weight must be non-negative")


@dataclass(frozen=True)
class DatasetRecord:
    record_id: int
    provenance: str           # "base" or "aug:<base_id>"
    split: str                # "train" or "holdout"
    scene: Scene
    trajectory: TrajectorySample  # physical units

    def is_base(self) -> bool:
        return self.provenance == "base"


@dataclass(frozen=True)
class LatticeResult:
    y: np.ndarray            # lateral offsets per station, meters
    levels: np.ndarray       # level indices per station
    cost: float
    anchor: int


# -- lattice planner ----------------------------------------------------------


def lattice_levels(scene: Scene, cfg: LatticeConfig) -> np.ndarray:
    """Lateral offsets sampled per station, symmetric around the centerline."""
    y_max = scene.usable_half_width - cfg.clearance_margin
    if y_max <= 0.0:
        raise InfeasibleSceneError("corridor narrower than the clearance margin")
    return np.linspace(-y_max, y_max, cfg.lateral_samples)


def anchor_station(scene: Scene, query_time: float) -> int:
    """Station farthest from every obstacle (first index on ties)."""
    track = scene.track
    if not scene.obstacles:
        return 0
    obs = scene.obstacle_positions(query_time)
    radii = scene.obstacle_radii()
    dist = np.linalg.norm(track.station_xy[:, None, :] - obs, axis=-1) - radii
    return int(np.argmax(np.min(dist, axis=1)))


def _segment_clearance_ok(p0, p1, obs, envelopes):
    """True where every obstacle clears the segments p0 -> p1.

    p0, p1: (..., 2); obs: (J, 2); envelopes: (J,).
    """
    d = p1 - p0                                        # (..., 2)
    dd = np.sum(d * d, axis=-1)                        # (...,)
    w = obs - p0[..., None, :]                         # (..., J, 2)
    t = np.sum(w * d[..., None, :], axis=-1) / np.maximum(dd[..., None], 1e-18)
    t = np.clip(t, 0.0, 1.0)
    closest = p0[..., None, :] + t[..., None] * d[..., None, :]
    dist = np.linalg.norm(obs - closest, axis=-1)      # (..., J)
    return np.all(dist >= envelopes, axis=-1)


def _lattice_tables(scene: Scene, cfg: LatticeConfig, query_time: float):
    """Node/edge feasibility masks and cost tables for the DP."""
    track = scene.track
    n = track.n_stations
    levels = lattice_levels(scene, cfg)
    q = levels.size
    ds = track.station_spacing

    pos = track.station_xy[:, None, :] + levels[None, :, None] \
        * track.station_normal[:, None, :]             # (N, Q, 2)

    node_ok = np.ones((n, q), dtype=bool)
    if scene.obstacles:
        obs = scene.obstacle_positions(query_time)
        radii = scene.obstacle_radii()
        env = radii + scene.vehicle_radius + scene.safety_margin \
            + cfg.clearance_margin
        dist = np.linalg.norm(pos[:, :, None, :] - obs, axis=-1)  # (N, Q, J)
        node_ok &= np.all(dist >= env, axis=-1)

    jumps = np.arange(-JUMP_LIMIT, JUMP_LIMIT + 1)
    n_jump = jumps.size
    spacing = levels[1] - levels[0] if q > 1 else 0.0
    dy = jumps * spacing
    # flattened-map arc length plus a small centerline-offset cost charged
    # to the target node; the latter breaks ties so detours return promptly
    edge_len = np.hypot(ds, dy)                         # (D,)
    offset_cost = cfg.offset_weight * levels**2 * ds    # (Q,)
    # curvature-change penalty between consecutive jumps
    pen = cfg.curvature_weight * ((dy[:, None] - dy[None, :]) ** 2) / ds  # (D_new, D_old)

    # edge_ok[k, l, j]: edge from (k, l) to (k+1, l + jumps[j])
    lvl = np.arange(q)
    tgt = lvl[:, None] + jumps[None, :]                 # (Q, D)
    valid = (tgt >= 0) & (tgt < q)
    tgt_c = np.clip(tgt, 0, q - 1)
    edge_ok = np.zeros((n, q, n_jump), dtype=bool)
    nxt = np.roll(np.arange(n), -1)
    for j in range(n_jump):
        edge_ok[:, :, j] = (valid[None, :, j]
                            & node_ok
                            & node_ok[nxt][:, tgt_c[:, j]])
    if scene.obstacles:
        p0 = pos[:, :, None, :].repeat(n_jump, axis=2)          # (N, Q, D, 2)
        p1 = pos[nxt][:, tgt_c, :]                              # (N, Q, D, 2)
        seg_ok = _segment_clearance_ok(p0, p1, obs, env)
        edge_ok &= seg_ok

    return levels, jumps, edge_len, offset_cost, pen, edge_ok, node_ok


def lattice_path(scene: Scene, cfg: LatticeConfig,
                 query_time: float | None = None) -> LatticeResult:
    """Shortest feasible cyclic path through the station/offset lattice.

    Edge cost is hypot(ds, dy) + curvature_weight * (dy - dy_prev)^2 / ds
    + offset_weight * y_target^2 * ds; all nodes and edges keep
    clearance_margin beyond the safety envelope.  The path is pinned at
    the anchor station to the feasible level nearest the centerline, and
    the wrap jump is enumerated so the curvature penalty is consistent
    across the seam.
    """
    if query_time is None:
        query_time = scene.tau
    track = scene.track
    n = track.n_stations
    levels, jumps, edge_len, offset_cost, pen, edge_ok, node_ok = \
        _lattice_tables(scene, cfg, query_time)
    q, n_jump = levels.size, jumps.size

    blocked = ~node_ok.any(axis=1)
    if blocked.any():
        raise InfeasibleSceneError(
            f"stations fully blocked: {np.nonzero(blocked)[0].tolist()}")

    k0 = anchor_station(scene, query_time)
    feas_anchor = np.nonzero(node_ok[k0])[0]
    anchor_lvl = int(feas_anchor[np.argmin(np.abs(levels[feas_anchor]))])

    order = (k0 + np.arange(n)) % n          # station at unrolled position i
    inf = np.inf
    best_cost = inf
    best_path = None

    lvl_idx = np.arange(q)
    src = lvl_idx[:, None] - jumps[None, :]            # (Q, D_new): source level
    src_valid = (src >= 0) & (src < q)
    src_c = np.clip(src, 0, q - 1)

    for d_in in range(n_jump):
        prev_lvl = anchor_lvl - jumps[d_in]
        if not (0 <= prev_lvl < q):
            continue
        cost = np.full((q, n_jump), inf)
        cost[anchor_lvl, d_in] = 0.0
        bps = np.zeros((n, q, n_jump), dtype=np.int8)
        j_cols = np.arange(n_jump)[None, :]
        dead = False
        for i in range(n):
            k = order[i]
            # cand[l', j_new, j_old] = cost[src(l', j_new), j_old] + step cost
            gathered = cost[src_c]                      # (Q, D_new, D_old)
            step = edge_len[None, :, None] + pen[None, :, :] \
                + offset_cost[:, None, None]
            cand = gathered + step
            ok_edge = edge_ok[k][src_c, j_cols]         # (Q, D_new)
            ok = (src_valid & ok_edge)[:, :, None]
            cand = np.where(ok, cand, inf)
            new_cost = cand.min(axis=2)
            bps[i] = cand.argmin(axis=2)
            cost = new_cost
            if not np.isfinite(cost).any():
                dead = True
                break
        if dead:
            continue
        total = cost[anchor_lvl, d_in]
        if total < best_cost:
            best_cost = total
            # reconstruct: walk backward from the anchor wrap state
            path_levels = np.zeros(n, dtype=int)
            lvl, j = anchor_lvl, d_in
            for i in range(n - 1, -1, -1):
                j_old = int(bps[i][lvl, j])
                path_levels[i] = lvl - jumps[j]
                lvl, j = path_levels[i], j_old
            y = np.zeros(n)
            y[order] = levels[path_levels]
            lvl_idx_out = np.zeros(n, dtype=int)
            lvl_idx_out[order] = path_levels
            best_path = (y, lvl_idx_out)

    if best_path is None:
        raise InfeasibleSceneError("no feasible cyclic lattice path")
    return LatticeResult(y=best_path[0], levels=best_path[1],
                         cost=float(best_cost), anchor=k0)


def _station_positions(track: Track, y: np.ndarray) -> np.ndarray:
    return track.station_xy + y[:, None] * track.station_normal


def _path_feasible_mask(scene: Scene, cfg: LatticeConfig, y: np.ndarray,
                        query_time: float) -> np.ndarray:
    """Per-station margin feasibility of a continuous lateral profile,
    including the segments to both neighbors."""
    track = scene.track
    ok = np.abs(y) <= scene.usable_half_width - cfg.clearance_margin + 1e-12
    if scene.obstacles:
        obs = scene.obstacle_positions(query_time)
        radii = scene.obstacle_radii()
        env = radii + scene.vehicle_radius + scene.safety_margin \
            + cfg.clearance_margin
        pos = _station_positions(track, y)
        seg_fwd = _segment_clearance_ok(pos, np.roll(pos, -1, axis=0), obs, env)
        ok &= seg_fwd & np.roll(seg_fwd, 1)
    return ok


def smooth_lattice_path(scene: Scene, cfg: LatticeConfig, y_raw: np.ndarray,
                        query_time: float | None = None,
                        max_sweeps: int = 300) -> np.ndarray:
    """Fixed-point neighbor averaging that never leaves the feasible set.

    Only stations near the raw detours move (a 3-station halo around the
    nonzero support); everything else keeps the raw value exactly, so the
    path returns to the lattice optimum away from obstacles.  The
    averaging pulls each detour taut against the clearance envelope.
    """
    if query_time is None:
        query_time = scene.tau
    if cfg.smoothing_weight == 0.0:
        return y_raw.copy()
    active = np.abs(y_raw) > 1e-12
    for _ in range(3):  # halo dilation, circular
        active = active | np.roll(active, 1) | np.roll(active, -1)
    if not active.any():
        return y_raw.copy()
    y = y_raw.copy()
    for _ in range(max_sweeps):
        target = 0.5 * (np.roll(y, 1) + np.roll(y, -1))
        proposal = np.where(active,
                            y + cfg.smoothing_weight * (target - y), y)
        ok = _path_feasible_mask(scene, cfg, proposal, query_time)
        candidate = np.where(ok, proposal, y)
        # moved stations may have broken a neighbor segment: re-verify
        for _ in range(5):
            ok2 = _path_feasible_mask(scene, cfg, candidate, query_time)
            if ok2.all():
                break
            candidate = np.where(ok2, candidate, y)
        else:
            candidate = y
        if np.max(np.abs(candidate - y)) < 1e-12:
            y = candidate
            break
        y = candidate
    return y


def heading_profile(track: Track, y: np.ndarray) -> np.ndarray:
    """Relative yaw from central differences in the flattened map."""
    ds = track.station_spacing
    return np.arctan2(np.roll(y, -1) - np.roll(y, 1), 2.0 * ds)


def plan_expert(scene: Scene, cfg: LatticeConfig,
                query_time: float | None = None,
                lattice_result: LatticeResult | None = None) -> TrajectorySample:
    """Shortest-feasible expert trajectory: lattice path, smoothed."""
    if query_time is None:
        query_time = scene.tau
    if lattice_result is None:
        lattice_result = lattice_path(scene, cfg, query_time)
    y = smooth_lattice_path(scene, cfg, lattice_result.y, query_time)
    phi = heading_profile(scene.track, y)
    return TrajectorySample(y_hat=y, phi_hat=phi)


# -- normalization ------------------------------------------------------------


def normalize(traj: TrajectorySample, track: Track,
              phi_scale: float) -> TrajectorySample:
    """Map physical units onto the O(1) coordinates the diffusion uses."""
    return TrajectorySample(y_hat=traj.y_hat / track.half_width,
                            phi_hat=traj.phi_hat / phi_scale)


def denormalize(traj: TrajectorySample, track: Track,
                phi_scale: float) -> TrajectorySample:
    return TrajectorySample(y_hat=traj.y_hat * track.half_width,
                            phi_hat=traj.phi_hat * phi_scale)


# -- scene generation and augmentation ----------------------------------------


def polyline_min_distance(points: np.ndarray, q: np.ndarray) -> float:
    """Distance from q to the closed polyline through points."""
    p0 = points
    p1 = np.roll(points, -1, axis=0)
    d = p1 - p0
    dd = np.sum(d * d, axis=1)
    t = np.clip(np.sum((q - p0) * d, axis=1) / np.maximum(dd, 1e-18), 0.0, 1.0)
    closest = p0 + t[:, None] * d
    return float(np.min(np.linalg.norm(q - closest, axis=1)))


def draw_obstacle(track: Track, rng, radius_rel=(0.05, 0.15)) -> Obstacle:
    radius = float(rng.uniform(*radius_rel) * 2.0 * track.half_width)
    s = float(rng.uniform(0.0, track.length))
    y_lim = max(track.half_width - 0.5 * radius, 0.0)
    y = float(rng.uniform(-y_lim, y_lim))
    pos = track.position(s) + y * track.normal(s)
    return Obstacle(center=(float(pos[0]), float(pos[1])), radius=radius)


def sample_scene(track: Track, rng, vehicle_radius: float = 0.09,
                 safety_margin: float = 0.02, obstacle_count=(1, 4),
                 radius_rel=(0.05, 0.15), lattice: LatticeConfig | None = None,
                 max_tries: int = 50) -> Scene:
    """Random static scene that admits a feasible lattice path."""
    lattice = lattice or LatticeConfig()
    for _ in range(max_tries):
        n_obs = int(rng.integers(obstacle_count[0], obstacle_count[1] + 1))
        obstacles = tuple(draw_obstacle(track, rng, radius_rel)
                          for _ in range(n_obs))
        scene = Scene(track=track, obstacles=obstacles,
                      vehicle_radius=vehicle_radius,
                      safety_margin=safety_margin)
        try:
            lattice_path(scene, lattice)
        except InfeasibleSceneError:
            continue
        return scene
    raise InfeasibleSceneError("could not draw a feasible scene")


def _reference_polyline(scene: Scene, cfg: LatticeConfig,
                        traj: TrajectorySample,
                        raw_path: np.ndarray | None) -> np.ndarray:
    pts = [_station_positions(scene.track, traj.y_hat)]
    if raw_path is not None:
        pts.append(_station_positions(scene.track, raw_path))
    return np.concatenate(pts, axis=0)


def augment(record: DatasetRecord, rng, count: int, *,
            lattice: LatticeConfig | None = None,
            saturation_band: float = 0.03,
            radius_rel=(0.05, 0.15), redundant_count=(1, 5),
            raw_path: np.ndarray | None = None,
            max_attempts: int = 100) -> list[DatasetRecord]:
    """Clone a base record under extra redundant obstacles.

    Each clone adds 1..5 obstacles whose clearance to the expert path
    (smoothed stations and, when given, the raw lattice polyline) exceeds
    the safety envelope plus the barrier saturation band and the lattice
    clearance margin, so neither feasibility nor the lattice optimum can
    change.  Trajectories are shared bitwise with the base record.
    """
    if not record.is_base():
        raise ValueError("augmentation expects a base record")
    if count == 0:
        return []
    lattice = lattice or LatticeConfig()
    scene = record.scene
    if raw_path is None:
        raw_path = lattice_path(scene, lattice).y
    ref = _reference_polyline(scene, lattice, record.trajectory, raw_path)
    extra_clear = max(saturation_band, lattice.clearance_margin) + 0.01

    out = []
    for i in range(count):
        n_new = int(rng.integers(redundant_count[0], redundant_count[1] + 1))
        placed = []
        for _ in range(n_new):
            for _ in range(max_attempts):
                cand = draw_obstacle(scene.track, rng, radius_rel)
                need = cand.radius + scene.vehicle_radius \
                    + scene.safety_margin + extra_clear
                if polyline_min_distance(ref, np.array(cand.center)) >= need:
                    placed.append(cand)
                    break
            else:
                logger.warning("augment: gave up placing a redundant obstacle "
                               "after %d attempts", max_attempts)
        if not placed:
            logger.warning("augment: dropping a clone of record %d "
                           "(no obstacle placed)", record.record_id)
            continue
        out.append(replace(
            record,
            record_id=-1,  # assigned by the caller
            provenance=f"aug:{record.record_id}",
            scene=scene.with_obstacles(scene.obstacles + tuple(placed)),
        ))
    return out


# -- dataset build ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    track_kind: str = "rounded_rect"
    track_params: dict = field(default_factory=dict)
    half_width: float = 0.46
    n_stations: int = 128
    base_count: int = 100
    augment_factor: int = 100
    split_ratio: float = 0.8
    seed: int = 0
    vehicle_radius: float = 0.09
    safety_margin: float = 0.02
    obstacle_count: tuple = (1, 4)
    radius_rel: tuple = (0.05, 0.15)
    redundant_count: tuple = (1, 5)
    phi_scale: float = 0.6
    saturation_band: float = 0.06  # barrier planning margin + 3 / kappa
    lattice: LatticeConfig = field(default_factory=LatticeConfig)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "track_kind", "half_width", "n_stations", "base_count",
            "augment_factor", "split_ratio", "seed", "vehicle_radius",
            "safety_margin", "phi_scale", "saturation_band")}
        d["track_params"] = dict(self.track_params)
        d["obstacle_count"] = list(self.obstacle_count)
        d["radius_rel"] = list(self.radius_rel)
        d["redundant_count"] = list(self.redundant_count)
        d["lattice"] = {
            "lateral_samples": self.lattice.lateral_samples,
            "smoothing_weight": self.lattice.smoothing_weight,
            "clearance_margin": self.lattice.clearance_margin,
            "curvature_weight": self.lattice.curvature_weight,
        }
        return d


def build_track_for(cfg: DatasetConfig) -> Track:
    return build_track(cfg.track_kind, half_width=cfg.half_width,
                       n_stations=cfg.n_stations, **cfg.track_params)


def build_dataset(cfg: DatasetConfig, out_dir) -> dict:
    """Plan, augment, shuffle, split and persist the dataset.

    Writes dataset.jsonl (one record per line) and manifest.json; returns
    the manifest dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    track = build_track_for(cfg)
    root = np.random.SeedSequence(cfg.seed)
    scene_seeds = root.spawn(cfg.base_count)
    shuffle_rng = np.random.default_rng(root.spawn(1)[0])

    empty = Scene(track=track, vehicle_radius=cfg.vehicle_radius,
                  safety_margin=cfg.safety_margin)
    nominal_traj = plan_expert(empty, cfg.lattice)
    nominal = NominalTrajectory(y_nom=nominal_traj.y_hat,
                                phi_nom=nominal_traj.phi_hat)

    records: list[DatasetRecord] = []
    skipped = 0
    next_id = 0
    for i in range(cfg.base_count):
        rng = np.random.default_rng(scene_seeds[i])
        try:
            scene = sample_scene(track, rng, cfg.vehicle_radius,
                                 cfg.safety_margin, cfg.obstacle_count,
                                 cfg.radius_rel, cfg.lattice)
            raw = lattice_path(scene, cfg.lattice)
            traj = plan_expert(scene, cfg.lattice, lattice_result=raw)
        except InfeasibleSceneError as exc:
            logger.warning("skipping base scene %d: %s", i, exc)
            skipped += 1
            continue
        base = DatasetRecord(record_id=next_id, provenance="base",
                             split="train", scene=scene, trajectory=traj)
        next_id += 1
        records.append(base)
        clones = augment(base, rng, cfg.augment_factor - 1,
                         lattice=cfg.lattice,
                         saturation_band=cfg.saturation_band,
                         radius_rel=cfg.radius_rel,
                         redundant_count=cfg.redundant_count,
                         raw_path=raw.y)
        for clone in clones:
            records.append(replace(clone, record_id=next_id))
            next_id += 1

    perm = shuffle_rng.permutation(len(records))
    n_train = int(np.ceil(cfg.split_ratio * len(records)))
    shuffled = []
    for pos, idx in enumerate(perm):
        rec = records[idx]
        shuffled.append(replace(rec,
                                split="train" if pos < n_train else "holdout"))

    lines = []
    for rec in shuffled:
        lines.append(json.dumps({
            "id": rec.record_id,
            "provenance": rec.provenance,
            "split": rec.split,
            "scene": rec.scene.to_dict(),
            "y_hat": rec.trajectory.y_hat.tolist(),
            "phi_hat": rec.trajectory.phi_hat.tolist(),
        }, sort_keys=True))
    (out / "dataset.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "format": "diffplan-dataset",
        "version": 1,
        "track": track.to_dict(),
        "n_stations": cfg.n_stations,
        "phi_scale": cfg.phi_scale,
        "vehicle_radius": cfg.vehicle_radius,
        "safety_margin": cfg.safety_margin,
        "normalization": {"y_scale": track.half_width,
                          "phi_scale": cfg.phi_scale},
        "nominal": {"y_nom": nominal.y_nom.tolist(),
                    "phi_nom": nominal.phi_nom.tolist()},
        "counts": {"records": len(shuffled), "train": n_train,
                   "holdout": len(shuffled) - n_train,
                   "base": sum(r.is_base() for r in shuffled),
                   "skipped_scenes": skipped},
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    logger.info("dataset: %d records (%d train / %d holdout), %d scenes skipped",
                len(shuffled), n_train, len(shuffled) - n_train, skipped)
    return manifest


@dataclass(frozen=True)
class DatasetBundle:
    records: tuple
    track: Track
    nominal: NominalTrajectory
    manifest: dict

    @property
    def phi_scale(self) -> float:
        return float(self.manifest["phi_scale"])


def load_dataset(out_dir) -> DatasetBundle:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    track = Track(np.asarray(manifest["track"]["centerline"], dtype=np.float64),
                  half_width=float(manifest["track"]["half_width"]),
                  n_stations=int(manifest["n_stations"]),
                  name=manifest["track"].get("name", "track"))
    records = []
    with (out / "dataset.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            scene = Scene(
                track=track,
                obstacles=tuple(Obstacle.from_dict(o)
                                for o in d["scene"]["obstacles"]),
                tau=float(d["scene"].get("tau", 0.0)),
                vehicle_radius=float(d["scene"]["vehicle_radius"]),
                safety_margin=float(d["scene"]["safety_margin"]))
            records.append(DatasetRecord(
                record_id=int(d["id"]), provenance=d["provenance"],
                split=d["split"], scene=scene,
                trajectory=TrajectorySample(y_hat=np.array(d["y_hat"]),
                                            phi_hat=np.array(d["phi_hat"]))))
    nominal = NominalTrajectory(
        y_nom=np.asarray(manifest["nominal"]["y_nom"], dtype=np.float64),
        phi_nom=np.asarray(manifest["nominal"]["phi_nom"], dtype=np.float64))
    return DatasetBundle(records=tuple(records), track=track, nominal=nominal,
                         manifest=manifest)


def training_matrix(bundle: DatasetBundle, split: str = "train") -> np.ndarray:
    """Stack normalized trajectories of one split into (n, 2, N)."""
    rows = []
    for rec in bundle.records:
        if rec.split != split:
            continue
        norm = normalize(rec.trajectory, bundle.track, bundle.phi_scale)
        rows.append(np.stack([norm.y_hat, norm.phi_hat]))
    if not rows:
        return np.zeros((0, 2, bundle.track.n_stations))
    return np.stack(rows)
