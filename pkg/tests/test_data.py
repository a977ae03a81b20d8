import hashlib
import heapq

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffplan.dataset import (
    DatasetConfig,
    LatticeConfig,
    augment,
    build_dataset,
    denormalize,
    DatasetRecord,
    heading_profile,
    lattice_path,
    load_dataset,
    normalize,
    plan_expert,
    polyline_min_distance,
    sample_scene,
    training_matrix,
    JUMP_LIMIT,
)
from diffplan.errors import InfeasibleSceneError
from diffplan.geometry import Obstacle, Scene, ellipse_track, feasible
from diffplan.trajectory import TrajectorySample

TRACK = ellipse_track(a=2.2, b=1.5, half_width=0.46, n_stations=48)
LAT = LatticeConfig()


def make_scene(obstacles=()):
    return Scene(track=TRACK, obstacles=tuple(obstacles))


# -- independent shortest-path oracle (plain-loop Dijkstra) --------------------


def oracle_lattice_cost(scene, cfg):
    """Same lattice problem, solved independently with heapq Dijkstra."""
    track = scene.track
    n = track.n_stations
    usable = track.half_width - scene.vehicle_radius - scene.safety_margin
    y_max = usable - cfg.clearance_margin
    q = cfg.lateral_samples
    levels = np.linspace(-y_max, y_max, q)
    ds = track.length / n
    obs = scene.obstacle_positions(scene.tau)
    radii = scene.obstacle_radii()
    env = radii + scene.vehicle_radius + scene.safety_margin \
        + cfg.clearance_margin

    def pos(k, lvl):
        return track.station_xy[k] + levels[lvl] * track.station_normal[k]

    def node_ok(k, lvl):
        p = pos(k, lvl)
        for o, e in zip(obs, env):
            if np.linalg.norm(p - o) < e:
                return False
        return True

    def seg_ok(p0, p1):
        d = p1 - p0
        dd = float(d @ d)
        for o, e in zip(obs, env):
            t = float((o - p0) @ d) / max(dd, 1e-18)
            t = min(max(t, 0.0), 1.0)
            if np.linalg.norm(o - (p0 + t * d)) < e:
                return False
        return True

    # anchor: same convention as the planner
    if len(obs):
        clear = [min(np.linalg.norm(track.station_xy[k] - o) - r
                     for o, r in zip(obs, radii)) for k in range(n)]
        k0 = int(np.argmax(clear))
    else:
        k0 = 0
    feas = [lvl for lvl in range(q) if node_ok(k0, lvl)]
    anchor_lvl = min(feas, key=lambda lvl: (abs(levels[lvl]), lvl))

    best = np.inf
    jumps = range(-JUMP_LIMIT, JUMP_LIMIT + 1)
    for d_in in jumps:
        if not (0 <= anchor_lvl - d_in < q):
            continue
        start = (0, anchor_lvl, d_in)
        dist = {start: 0.0}
        pq = [(0.0, start)]
        goal = (n, anchor_lvl, d_in)
        result = np.inf
        while pq:
            c, (i, lvl, j) = heapq.heappop(pq)
            if c > dist.get((i, lvl, j), np.inf):
                continue
            if (i, lvl, j) == goal:
                result = c
                break
            if i == n:
                continue
            k = (k0 + i) % n
            k_next = (k + 1) % n
            for j2 in jumps:
                lvl2 = lvl + j2
                if not (0 <= lvl2 < q):
                    continue
                if not (node_ok(k, lvl) and node_ok(k_next, lvl2)):
                    continue
                if not seg_ok(pos(k, lvl), pos(k_next, lvl2)):
                    continue
                dy = levels[lvl2] - levels[lvl]
                dy_prev = levels[lvl] - levels[lvl - j] if 0 <= lvl - j < q else None
                if dy_prev is None:
                    continue
                step = np.hypot(ds, dy) \
                    + cfg.curvature_weight * (dy - dy_prev) ** 2 / ds \
                    + cfg.offset_weight * levels[lvl2] ** 2 * ds
                nxt = (i + 1, lvl2, j2)
                nc = c + step
                if nc < dist.get(nxt, np.inf):
                    dist[nxt] = nc
                    heapq.heappush(pq, (nc, nxt))
        best = min(best, result)
    return best


class TestLatticePlanner:
    def test_empty_scene_is_centerline(self):
        scene = make_scene()
        traj = plan_expert(scene, LAT)
        np.testing.assert_array_equal(traj.y_hat, 0.0)
        np.testing.assert_array_equal(traj.phi_hat, 0.0)
        res = lattice_path(scene, LAT)
        assert res.cost == pytest.approx(TRACK.length, rel=1e-9)

    def test_single_obstacle_detour(self):
        k = 12
        scene = make_scene([Obstacle(center=tuple(TRACK.station_xy[k]),
                                     radius=0.1)])
        traj = plan_expert(scene, LAT)
        assert np.all(feasible(scene, traj, 0.0))
        # detours near the obstacle, returns to the centerline away from it
        assert abs(traj.y_hat[k]) > 0.15
        far = np.r_[0:max(0, k - 12), k + 12:TRACK.n_stations]
        assert np.max(np.abs(traj.y_hat[far])) < 1e-9
        # min clearance respects the margin
        pos = TRACK.station_xy + traj.y_hat[:, None] * TRACK.station_normal
        d = np.linalg.norm(pos - TRACK.station_xy[k], axis=1)
        env = 0.1 + scene.vehicle_radius + scene.safety_margin
        assert np.min(d) >= env + LAT.clearance_margin - 1e-9

    def test_blocked_station_raises(self):
        k = 5
        # three obstacles spanning the whole corridor at one station
        obs = [Obstacle(center=tuple(TRACK.station_xy[k]
                                     + y * TRACK.station_normal[k]), radius=0.2)
               for y in (-0.35, 0.0, 0.35)]
        with pytest.raises(InfeasibleSceneError):
            lattice_path(make_scene(obs), LAT)

    def test_against_dijkstra_oracle(self):
        rng = np.random.default_rng(123)
        checked = 0
        for _ in range(20):
            scene = sample_scene(TRACK, rng, lattice=LAT)
            res = lattice_path(scene, LAT)
            oracle = oracle_lattice_cost(scene, LAT)
            assert res.cost == pytest.approx(oracle, abs=1e-9)
            checked += 1
        assert checked == 20

    def test_heading_profile_wraps(self):
        y = np.zeros(TRACK.n_stations)
        y[0] = 0.05
        phi = heading_profile(TRACK, y)
        # stations N-1 and 1 see the bump through the wrap
        assert phi[-1] > 0.0
        assert phi[1] < 0.0


class TestNormalization:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        n = TRACK.n_stations
        traj = TrajectorySample(y_hat=rng.uniform(-0.4, 0.4, n),
                                phi_hat=rng.uniform(-1.0, 1.0, n))
        back = denormalize(normalize(traj, TRACK, 0.6), TRACK, 0.6)
        np.testing.assert_allclose(back.y_hat, traj.y_hat, atol=1e-12)
        np.testing.assert_allclose(back.phi_hat, traj.phi_hat, atol=1e-12)

    def test_half_width_maps_to_one(self):
        n = TRACK.n_stations
        traj = TrajectorySample(y_hat=np.full(n, TRACK.half_width),
                                phi_hat=np.zeros(n))
        norm = normalize(traj, TRACK, 0.6)
        np.testing.assert_allclose(norm.y_hat, 1.0)

    def test_zero_fixed_point(self):
        n = TRACK.n_stations
        traj = TrajectorySample(y_hat=np.zeros(n), phi_hat=np.zeros(n))
        norm = normalize(traj, TRACK, 0.6)
        np.testing.assert_array_equal(norm.y_hat, 0.0)
        np.testing.assert_array_equal(norm.phi_hat, 0.0)


class TestAugment:
    def base_record(self, rng):
        scene = sample_scene(TRACK, rng, lattice=LAT)
        traj = plan_expert(scene, LAT)
        return DatasetRecord(record_id=0, provenance="base", split="train",
                             scene=scene, trajectory=traj)

    def test_count_zero(self):
        rng = np.random.default_rng(1)
        rec = self.base_record(rng)
        assert augment(rec, rng, 0, lattice=LAT) == []

    def test_clones_share_trajectory_bitwise(self):
        rng = np.random.default_rng(2)
        rec = self.base_record(rng)
        clones = augment(rec, rng, 5, lattice=LAT)
        assert len(clones) == 5
        for c in clones:
            assert c.trajectory.y_hat.tobytes() == rec.trajectory.y_hat.tobytes()
            assert c.trajectory.phi_hat.tobytes() == rec.trajectory.phi_hat.tobytes()
            assert len(c.scene.obstacles) > len(rec.scene.obstacles)
            assert c.provenance == "aug:0"

    def test_clones_stay_feasible(self):
        rng = np.random.default_rng(3)
        rec = self.base_record(rng)
        for c in augment(rec, rng, 10, lattice=LAT):
            assert np.all(feasible(c.scene, c.trajectory, 0.0))

    def test_replanning_cost_invariant(self):
        rng = np.random.default_rng(4)
        rec = self.base_record(rng)
        base_cost = lattice_path(rec.scene, LAT).cost
        for c in augment(rec, rng, 8, lattice=LAT):
            assert lattice_path(c.scene, LAT).cost == pytest.approx(
                base_cost, abs=1e-9)

    def test_rejects_non_base(self):
        rng = np.random.default_rng(5)
        rec = self.base_record(rng)
        clone = augment(rec, rng, 1, lattice=LAT)[0]
        with pytest.raises(ValueError):
            augment(clone, rng, 1, lattice=LAT)


class TestBuildDataset:
    CFG = DatasetConfig(track_kind="ellipse",
                        track_params={"a": 2.2, "b": 1.5},
                        n_stations=48, base_count=4, augment_factor=5, seed=9)

    def test_counts_and_split(self, tmp_path):
        manifest = build_dataset(self.CFG, tmp_path)
        assert manifest["counts"]["records"] == 20
        assert manifest["counts"]["train"] == 16
        assert manifest["counts"]["base"] == 4
        bundle = load_dataset(tmp_path)
        assert len(bundle.records) == 20
        mat = training_matrix(bundle)
        assert mat.shape == (16, 2, 48)

    def test_single_record_goes_to_train(self, tmp_path):
        cfg = DatasetConfig(track_kind="ellipse",
                            track_params={"a": 2.2, "b": 1.5},
                            n_stations=48, base_count=1, augment_factor=1,
                            seed=3)
        manifest = build_dataset(cfg, tmp_path)
        assert manifest["counts"]["records"] == 1
        bundle = load_dataset(tmp_path)
        assert bundle.records[0].split == "train"

    def test_deterministic_digest(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        build_dataset(self.CFG, d1)
        build_dataset(self.CFG, d2)
        for name in ("dataset.jsonl", "manifest.json"):
            h1 = hashlib.sha256((d1 / name).read_bytes()).hexdigest()
            h2 = hashlib.sha256((d2 / name).read_bytes()).hexdigest()
            assert h1 == h2

    def test_every_record_feasible(self, tmp_path):
        build_dataset(self.CFG, tmp_path)
        bundle = load_dataset(tmp_path)
        for rec in bundle.records:
            assert np.all(feasible(rec.scene, rec.trajectory, rec.scene.tau))

    def test_nominal_is_centerline(self, tmp_path):
        build_dataset(self.CFG, tmp_path)
        bundle = load_dataset(tmp_path)
        np.testing.assert_array_equal(bundle.nominal.y_nom, 0.0)


class TestPolylineDistance:
    def test_point_on_polyline(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert polyline_min_distance(pts, np.array([0.5, 0.0])) == 0.0

    def test_interior_point(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert polyline_min_distance(pts, np.array([0.5, 0.5])) == pytest.approx(0.5)
