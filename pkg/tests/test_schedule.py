import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from diffplan.schedule import GuidanceSchedule, NoiseSchedule, TimeGrid, make_grid

SCHED = NoiseSchedule(r1=100.0, r0=30.0)
GUIDE = GuidanceSchedule(h1=1.0, h2=50.0, h3=0.7)


class TestBeta:
    def test_endpoints(self):
        assert SCHED.beta(0.0) == 30.0
        assert SCHED.beta(1.0) == 130.0

    def test_midpoint(self):
        assert SCHED.beta(0.5) == pytest.approx(55.0, abs=0.0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            SCHED.beta(-0.01)
        with pytest.raises(ValueError):
            SCHED.beta(1.01)

    def test_variance_preserving_coupling(self):
        t = np.linspace(0.0, 1.0, 17)
        np.testing.assert_allclose(SCHED.diffusion(t) ** 2, 2.0 * SCHED.beta(t),
                                   rtol=1e-15)

    def test_invalid_constants(self):
        with pytest.raises(ValueError):
            NoiseSchedule(r1=100.0, r0=0.0)
        with pytest.raises(ValueError):
            NoiseSchedule(r1=-1.0, r0=30.0)


class TestBetaBar:
    def test_at_zero(self):
        assert SCHED.beta_bar(0.0) == 1.0

    def test_at_one(self):
        # closed form exp(-190/3)
        assert SCHED.beta_bar(1.0) == pytest.approx(np.exp(-190.0 / 3.0), rel=1e-14)
        assert SCHED.beta_bar(1.0) == pytest.approx(3.1238e-28, rel=1e-4)

    def test_against_quadrature(self):
        # independent oracle: adaptive quadrature of the integral of beta
        rng = np.random.default_rng(0)
        for t in rng.uniform(0.0, 1.0, size=100):
            integral, err = quad(lambda u: SCHED.beta(u), 0.0, t, epsabs=1e-13)
            assert abs(SCHED.beta_bar(t) - np.exp(-integral)) <= 1e-10

    def test_strictly_decreasing(self):
        t = np.linspace(0.0, 1.0, 400)
        vals = SCHED.beta_bar(t)
        assert np.all(np.diff(vals) < 0.0)


class TestMarginal:
    def test_no_perturbation_at_start(self):
        x0 = np.array([0.3, -1.2])
        mean, var = SCHED.marginal_params(0.0, x0)
        np.testing.assert_array_equal(mean, x0)
        assert var == 0.0

    def test_terminal_is_standard_normal(self):
        x0 = np.array([5.0, -3.0, 2.0])
        mean, var = SCHED.marginal_params(1.0, x0)
        assert np.max(np.abs(mean)) < 1e-25
        assert var == pytest.approx(1.0, abs=1e-20)

    def test_variance_identity(self):
        # variance equals 1 - beta_bar^2 exactly under the VP coupling
        for t in np.linspace(0.0, 1.0, 50):
            _, var = SCHED.marginal_params(t, np.zeros(1))
            assert var == 1.0 - SCHED.beta_bar(t) ** 2

    def test_monte_carlo_forward_draws(self):
        # oracle: empirical mean/variance of 1e5 forward draws at t = 0.3
        rng = np.random.default_rng(7)
        n = 100_000
        t = 0.3
        x0 = np.full(n, 0.8)
        draws = SCHED.perturb(x0, t, rng)
        mean, var = SCHED.marginal_params(t, 0.8)
        se_mean = np.sqrt(var / n)
        se_var = var * np.sqrt(2.0 / n)
        assert abs(np.mean(draws) - mean) < 3.0 * se_mean
        assert abs(np.var(draws) - var) < 3.0 * se_var


class TestGamma:
    def test_midpoint_is_half_peak(self):
        assert GUIDE.gamma(0.7) == pytest.approx(0.5, abs=1e-12)

    def test_near_one_is_tiny(self):
        assert GUIDE.gamma(1.0) == pytest.approx(1.0 / (1.0 + np.e**15), rel=1e-12)
        assert GUIDE.gamma(1.0) <= 1e-6

    def test_near_zero_is_peak(self):
        assert GUIDE.gamma(0.0) >= 1.0 - 1e-9
        assert GUIDE.gamma(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_non_increasing(self):
        t = np.linspace(0.0, 1.0, 500)
        g = GUIDE.gamma(t)
        assert np.all(np.diff(g) <= 0.0)

    @given(h1=st.floats(0.0, 10.0), h2=st.floats(0.1, 200.0),
           h3=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_property(self, h1, h2, h3):
        gs = GuidanceSchedule(h1=h1, h2=h2, h3=h3)
        t = np.linspace(0.0, 1.0, 101)
        g = gs.gamma(t)
        assert np.all(np.diff(g) <= 1e-15)
        assert gs.gamma(h3) == pytest.approx(h1 / 2.0, rel=1e-12, abs=1e-15)


class TestTimeGrid:
    def test_single_step(self):
        g = make_grid(1, 2.2)
        np.testing.assert_array_equal(g.nodes, [1.0, 0.0])

    def test_two_steps(self):
        g = make_grid(2, 2.2)
        assert g.nodes[1] == pytest.approx(0.5**2.2, rel=1e-15)

    def test_uniform_degenerate(self):
        g = make_grid(10, 1.0)
        np.testing.assert_allclose(g.nodes, np.linspace(1.0, 0.0, 11), atol=1e-15)

    def test_deltas_negative(self):
        g = make_grid(500, 2.2)
        assert np.all(g.deltas < 0.0)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            make_grid(0, 2.2)
        with pytest.raises(ValueError):
            make_grid(10, 0.0)

    @given(steps=st.integers(1, 10_000),
           warp=st.floats(0.01, 5.0, exclude_min=True))
    @settings(max_examples=200, deadline=None)
    def test_grid_property(self, steps, warp):
        g = make_grid(steps, warp)
        assert g.nodes[0] == 1.0
        assert g.nodes[-1] == 0.0
        assert np.all(np.diff(g.nodes) < 0.0)

    def test_rejects_tampered_nodes(self):
        with pytest.raises(ValueError):
            TimeGrid(nodes=np.array([1.0, 0.5, 0.7, 0.0]), p=1.0)
