import numpy as np
import pytest

from diffplan.barrier import (
    BarrierConfig,
    barrier_grad,
    barrier_grad_batch,
    barrier_value,
    barrier_value_batch,
)
from diffplan.geometry import Obstacle, Scene, rounded_rect_track
from diffplan.trajectory import NominalTrajectory, TrajectorySample

N = 128


@pytest.fixture(scope="module")
def track():
    return rounded_rect_track(n_stations=N)


@pytest.fixture(scope="module")
def nominal():
    return NominalTrajectory(y_nom=np.zeros(N), phi_nom=np.zeros(N))


@pytest.fixture(scope="module")
def cfg(nominal):
    return BarrierConfig(nominal=nominal)


def normalized(cfg, track, y_phys, phi_phys):
    return TrajectorySample(y_hat=np.asarray(y_phys) / track.half_width,
                            phi_hat=np.asarray(phi_phys) / cfg.phi_scale)


def random_scene(track, rng, n_obs=(1, 4)):
    obstacles = []
    for _ in range(int(rng.integers(*n_obs))):
        s = rng.uniform(0.0, track.length)
        y = rng.uniform(-0.3, 0.3)
        pos = track.position(s) + y * track.normal(s)
        obstacles.append(Obstacle(center=tuple(pos),
                                  radius=float(rng.uniform(0.05, 0.12))))
    return Scene(track=track, obstacles=tuple(obstacles))


class TestBarrierValue:
    def test_saturated_feasible_near_zero(self, track, cfg):
        # nominal on the empty scene: penetration is far below -3/kappa at
        # every station, so the obstacle term underflows
        scene = Scene(track=track)
        traj = normalized(cfg, track, np.zeros(N), np.zeros(N))
        v = barrier_value(cfg, scene, traj, 0.0)
        assert v < 1e-3
        assert v < 0.05 * cfg.alpha * N

    def test_deep_penetration_value(self, track, cfg):
        k = 5
        center = track.station_xy[k]
        radius = 0.12
        scene = Scene(track=track, obstacles=(Obstacle(center=tuple(center),
                                                       radius=radius),))
        y = np.zeros(N)
        traj = normalized(cfg, track, y, np.zeros(N))
        v = barrier_value(cfg, scene, traj, 0.0)
        # station 5 sits at the obstacle center: the logistic step saturates
        # at alpha and the interior ramp adds alpha * ramp * shifted pen
        pen = radius + scene.vehicle_radius + scene.safety_margin + cfg.margin
        station_term = cfg.alpha * (1.0 + cfg.ramp * pen)
        assert v >= 0.99 * station_term
        # neighbors inside the envelope contribute at most the same amount
        spacing = track.station_spacing
        n_inside = 2 * int(pen / spacing) + 1
        assert v <= 1.01 * station_term * n_inside + cfg.alpha * N * 0.05

    def test_quadratic_deviation_value(self, track, cfg):
        scene = Scene(track=track)
        y = np.zeros(N)
        y[10] = 0.1  # meters
        traj = normalized(cfg, track, y, np.zeros(N))
        v = barrier_value(cfg, scene, traj, 0.0)
        assert v == pytest.approx(0.5 * cfg.epsilon * 0.1**2, abs=1e-6)
        assert v == pytest.approx(0.08, abs=1e-6)

    def test_non_negative(self, track, cfg):
        rng = np.random.default_rng(0)
        for _ in range(20):
            scene = random_scene(track, rng)
            x = rng.normal(0.0, 0.5, 2 * N)
            assert barrier_value_batch(cfg, scene, x, 0.0) >= 0.0

    def test_length_mismatch_rejected(self, track, cfg):
        scene = Scene(track=track)
        bad = TrajectorySample(y_hat=np.zeros(N // 2), phi_hat=np.zeros(N // 2))
        with pytest.raises(ValueError):
            barrier_value(cfg, scene, bad, 0.0)

    def test_redundant_obstacle_invariance(self, track, cfg):
        # obstacles beyond the underflow saturation band of the sigmoid
        # (36/kappa) plus the log-sum-exp spread leave V unchanged
        scene = Scene(track=track)
        traj = normalized(cfg, track, np.zeros(N), np.zeros(N))
        v0 = barrier_value(cfg, scene, traj, 0.0)
        clearance = cfg.margin + 36.0 / cfg.kappa \
            + cfg.lse_temp * np.log(4) + 0.01
        # place a far obstacle: outside the corridor beyond clearance
        k = 30
        pos = (track.station_xy[k]
               + (track.half_width + clearance + 0.3) * track.station_normal[k])
        radius = 0.1
        far = Obstacle(center=tuple(pos), radius=radius)
        d = np.linalg.norm(track.station_xy - np.array(pos), axis=1)
        envelope = radius + scene.vehicle_radius + scene.safety_margin
        assert np.min(d) - envelope > clearance
        v1 = barrier_value(cfg, scene.with_obstacles((far,)), traj, 0.0)
        assert abs(v1 - v0) <= 1e-9

    def test_monotone_in_penetration(self, track, cfg):
        # pushing one station toward an obstacle never decreases V
        k = 8
        center = track.station_xy[k] + 0.25 * track.station_normal[k]
        scene = Scene(track=track, obstacles=(Obstacle(center=tuple(center),
                                                       radius=0.1),))
        vals = []
        for y_k in np.linspace(0.0, 0.25, 12):
            y = np.zeros(N)
            y[k] = y_k
            x = np.concatenate([y / track.half_width, np.zeros(N)])
            # isolate the obstacle term: subtract the quadratic part
            v = barrier_value_batch(cfg, scene, x, 0.0)
            v_quad = 0.5 * cfg.epsilon * y_k**2
            vals.append(v - v_quad)
        assert np.all(np.diff(vals) >= -1e-12)


class TestBarrierGrad:
    def test_saturated_gradient_is_zero(self, track, nominal):
        # saturation requires kappa * (pen + margin) <= -36 at the nominal
        scene = Scene(track=track)
        margin = 0.03
        kappa = 40.0 / (scene.usable_half_width - margin)
        cfg = BarrierConfig(kappa=kappa, margin=margin, nominal=nominal)
        traj = normalized(cfg, track, np.zeros(N), np.zeros(N))
        g = barrier_grad(cfg, scene, traj, 0.0)
        assert np.max(np.abs(g)) < 1e-6

    def test_quadratic_part_isolated(self, track, cfg):
        scene = Scene(track=track)
        delta = 0.07  # meters, stays saturated-feasible for the track term
        y = np.zeros(N)
        y[33] = delta
        traj = normalized(cfg, track, y, np.zeros(N))
        g = barrier_grad(cfg, scene, traj, 0.0)
        expected = np.zeros(2 * N)
        expected[33] = cfg.epsilon * delta * track.half_width
        # obstacle term is not exactly saturated at default kappa; allow a
        # small leak relative to the quadratic contribution
        assert g[33] == pytest.approx(expected[33], rel=5e-3)
        mask = np.ones(2 * N, bool)
        mask[33] = False
        assert np.max(np.abs(g[mask])) < 5e-3 * abs(expected[33])

    def test_finite_difference_oracle(self, track, cfg):
        # central differences on 100 random (scene, trajectory) pairs
        rng = np.random.default_rng(2024)
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            scene = random_scene(track, rng)
            x = rng.normal(0.0, 0.4, 2 * N)
            g = barrier_grad_batch(cfg, scene, x, 0.0)
            idx = rng.choice(2 * N, size=12, replace=False)
            fd = np.zeros_like(idx, dtype=float)
            for j, i in enumerate(idx):
                xp = x.copy(); xp[i] += h
                xm = x.copy(); xm[i] -= h
                fd[j] = (barrier_value_batch(cfg, scene, xp, 0.0)
                         - barrier_value_batch(cfg, scene, xm, 0.0)) / (2 * h)
            scale = max(np.max(np.abs(g)), 1e-8)
            worst = max(worst, np.max(np.abs(fd - g[idx])) / scale)
        assert worst <= 1e-5

    def test_phi_gradient_pure_quadratic(self, track, cfg):
        rng = np.random.default_rng(1)
        scene = random_scene(track, rng)
        x = rng.normal(0.0, 0.4, 2 * N)
        g = barrier_grad_batch(cfg, scene, x, 0.0)
        phi_phys = x[N:] * cfg.phi_scale
        expected = cfg.epsilon * (phi_phys - cfg.nominal.phi_nom) * cfg.phi_scale
        np.testing.assert_allclose(g[N:], expected, rtol=1e-12)

    def test_batch_matches_single(self, track, cfg):
        rng = np.random.default_rng(4)
        scene = random_scene(track, rng)
        xs = rng.normal(0.0, 0.4, (5, 2 * N))
        gb = barrier_grad_batch(cfg, scene, xs, 0.0)
        for i in range(5):
            gi = barrier_grad_batch(cfg, scene, xs[i], 0.0)
            np.testing.assert_allclose(gb[i], gi, rtol=1e-12)
        vb = barrier_value_batch(cfg, scene, xs, 0.0)
        assert vb.shape == (5,)


class TestConfigValidation:
    def test_rejects_bad_constants(self, nominal):
        with pytest.raises(ValueError):
            BarrierConfig(alpha=0.0, nominal=nominal)
        with pytest.raises(ValueError):
            BarrierConfig(kappa=0.0, nominal=nominal)
        with pytest.raises(ValueError):
            BarrierConfig(lse_temp=0.0, nominal=nominal)
        with pytest.raises(ValueError):
            BarrierConfig(nominal=None)
