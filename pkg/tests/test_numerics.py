import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid
from scipy.stats import ks_2samp

from loggamma_gibbs.numerics import (
    EULER_GAMMA,
    ConvergenceError,
    DomainError,
    Grid,
    GridDensity,
    RngStream,
    digamma,
    g_theta,
    g_theta_inv,
    inverse_digamma,
    log_G,
    polygamma,
    sample_gamma,
    sample_gig0,
    sample_inverse_gamma,
    sample_log_gig0,
    validate_hamiltonians,
)


def series_polygamma(m, x, n=10**6):
    # direct sum of the defining series plus an Euler-Maclaurin tail
    k = np.arange(n, dtype=float) + x
    if m == 1:
        return float(np.sum(1 / k**2) + 1 / (n + x) + 0.5 / (n + x) ** 2)
    return float(-2 * np.sum(1 / k**3) - 1 / (n + x) ** 2 - 1 / (n + x) ** 3)


def series_digamma(x, n=10**7):
    # Psi(x) = -gamma + sum_{k>=0} (1/(k+1) - 1/(k+x))
    k = np.arange(n, dtype=float)
    head = np.sum(1 / (k + 1) - 1 / (k + x))
    tail = (x - 1) / (n + 0.5 * x)
    return float(-EULER_GAMMA + head + tail)


class TestRngStream:
    def test_replay_is_bitwise(self):
        a = RngStream(42, 3).uniform(1000)
        b = RngStream(42, 3).uniform(1000)
        assert np.array_equal(a, b)

    def test_streams_differ_and_look_independent(self):
        a = RngStream(42, 0).uniform(20000)
        b = RngStream(42, 1).uniform(20000)
        assert not np.array_equal(a, b)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.03
        assert ks_2samp(a, b).statistic < 0.02

    def test_uniforms_open_interval(self):
        u = RngStream(1).uniform(10**5)
        assert np.all(u > 0) and np.all(u < 1)

    def test_counter(self):
        r = RngStream(9)
        r.uniform(5)
        r.standard_gamma(2.0, (3, 4))
        assert r.counter == 17

    def test_bad_seed(self):
        with pytest.raises(DomainError):
            RngStream(-1)


class TestPolygamma:
    def test_digamma_known(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-14)
        assert digamma(2.0) == pytest.approx(1 - EULER_GAMMA, abs=1e-14)
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * math.log(2), abs=1e-13)

    def test_digamma_half_against_series(self):
        assert abs(digamma(0.5) - series_digamma(0.5)) < 1e-6

    @pytest.mark.parametrize("x", [1e-3, 0.37, 3.3, 11.0, 250.0, 1e6])
    def test_digamma_range(self, x):
        from scipy.special import psi

        assert abs(digamma(x) - psi(x)) < 1e-12 * max(1.0, abs(psi(x)))

    def test_trigamma_values(self):
        assert abs(polygamma(1, 1.0) - math.pi**2 / 6) < 1e-12
        assert abs(polygamma(1, 0.5) - math.pi**2 / 2) < 1e-12
        assert abs(polygamma(1, 1.0) - series_polygamma(1, 1.0)) < 1e-10

    @pytest.mark.parametrize("x", [0.2, 1.3, 7.5])
    def test_tetragamma_series(self, x):
        assert abs(polygamma(2, x) - series_polygamma(2, x)) < 1e-10

    def test_array_and_scalar_paths_agree(self):
        xs = np.array([0.01, 0.5, 2.0, 9.99, 10.0, 33.0])
        for m in (1, 2):
            assert np.allclose(polygamma(m, xs), [polygamma(m, float(x)) for x in xs], rtol=1e-14, atol=0)
        assert np.allclose(digamma(xs), [digamma(float(x)) for x in xs], rtol=1e-14, atol=0)

    def test_trigamma_positive(self):
        assert np.all(polygamma(1, np.geomspace(1e-3, 1e3, 50)) > 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            digamma(0.0)
        with pytest.raises(DomainError):
            polygamma(3, 1.0)

    def test_inverse_digamma(self):
        for y in (-10.0, -1.0, 0.0, 2.5):
            assert abs(digamma(inverse_digamma(y)) - y) < 1e-12


class TestG:
    def test_symmetry_point(self):
        for th in (0.5, 1.0, 3.0):
            assert g_theta(th, th / 2) == pytest.approx(1.0, abs=1e-14)
            assert g_theta_inv(th, 1.0) == pytest.approx(th / 2, abs=1e-12)

    def test_limit_at_zero(self):
        assert g_theta(1.0, 1e-8) < 1e-14

    def test_cross_check_by_series(self):
        ref = series_polygamma(1, 0.7) / series_polygamma(1, 1.3)
        assert abs(g_theta(2.0, 1.3) - ref) < 1e-9

    def test_increasing(self):
        z = np.linspace(0.01, 1.99, 200)
        assert np.all(np.diff(g_theta(2.0, z)) > 0)

    @pytest.mark.parametrize("r", [0.1, 1.0, 10.0])
    def test_round_trip(self, r):
        for th in (0.5, 2.0):
            assert abs(g_theta(th, g_theta_inv(th, r)) - r) <= 1e-10 * max(1, r)

    def test_reflection(self):
        for th in (0.5, 1.0, 2.0):
            for x in (0.3, 2.0, 7.0):
                assert abs(g_theta_inv(th, 1 / x) - (th - g_theta_inv(th, x))) < 1e-10

    def test_vectorized_inverse(self):
        r = np.array([0.2, 1.0, 5.0])
        assert np.allclose(g_theta_inv(1.5, r), [g_theta_inv(1.5, float(v)) for v in r], atol=1e-12)

    def test_inverse_errors(self):
        with pytest.raises(DomainError):
            g_theta_inv(1.0, -1.0)
        with pytest.raises(ConvergenceError):
            g_theta_inv(1.0, 1e300)


class TestSamplers:
    def test_gamma_mean(self):
        x = sample_gamma(2.0, RngStream(3), 10**6)
        assert abs(x.mean() - 2.0) < 0.01

    def test_gamma_reproducible(self):
        assert sample_gamma(0.7, RngStream(5)) == sample_gamma(0.7, RngStream(5))

    def test_inverse_gamma_against_density(self):
        th = 1.5
        v = sample_inverse_gamma(th, RngStream(8), 10**5)
        grid = np.linspace(1e-6, 400.0, 2**18)
        dens = grid ** (-th - 1) * np.exp(-1 / grid) / math.gamma(th)
        cdf = cumulative_trapezoid(dens, grid, initial=0.0)
        F = np.interp(np.sort(v), grid, cdf, right=1.0)
        n = v.size
        ks = max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
        assert ks < 0.005

    def test_gig_symmetric_case(self):
        v = sample_gig0(np.full(10**5, 3.0), np.full(10**5, 3.0), RngStream(11))
        w = sample_gig0(np.full(10**5, 3.0), np.full(10**5, 3.0), RngStream(12))
        assert ks_2samp(v, 1 / w).statistic < 0.01

    @staticmethod
    def _gig_grid(chi, psi):
        x = np.linspace(1e-6, 60.0, 2**14)
        f = np.exp(-0.5 * (chi / x + psi * x)) / x
        cdf = cumulative_trapezoid(f, x, initial=0.0)
        return x, f, cdf / cdf[-1]

    def test_gig_cdf(self):
        x, _, cdf = self._gig_grid(2.0, 2.0)
        v = np.sort(sample_gig0(np.full(10**5, 2.0), np.full(10**5, 2.0), RngStream(13)))
        F = np.interp(v, x, cdf)
        n = v.size
        ks = max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
        assert ks < 0.005

    def test_gig_mean(self):
        x, f, _ = self._gig_grid(4.0, 1.0)
        mean = np.trapezoid(x * f, x) / np.trapezoid(f, x)
        v = sample_gig0(np.full(10**5, 4.0), np.full(10**5, 1.0), RngStream(14))
        assert abs(v.mean() / mean - 1) < 0.005

    def test_log_gig_extreme_parameters(self):
        # tiny and huge omega, both finite
        s = sample_log_gig0(np.array([-60.0, 60.0]), np.array([-60.0, 60.0]), RngStream(2))
        assert np.all(np.isfinite(s))

    def test_gig_domain(self):
        with pytest.raises(DomainError):
            sample_gig0(0.0, 1.0, RngStream(0))


class TestGrid:
    def test_grid_nodes(self):
        g = Grid(-1.0, 1.0, 5)
        assert np.allclose(g.nodes, [-1, -0.5, 0, 0.5, 1])
        assert g.step == 0.5
        with pytest.raises(DomainError):
            Grid(1.0, 1.0)

    def test_density_checks(self):
        g = Grid(0.0, 1.0, 3)
        assert GridDensity(g, [-np.inf, 0.0, -np.inf]).mass() == pytest.approx(0.5)
        with pytest.raises(DomainError):
            GridDensity(g, [np.nan, 0.0, 0.0])
        with pytest.raises(DomainError):
            GridDensity(g, [0.0, 0.0])


class TestHamiltonians:
    @pytest.mark.parametrize("theta", [0.5, 2.0])
    def test_report(self, theta):
        rep = validate_hamiltonians(theta, n_t=9)
        assert rep.density_mass_residual < 1e-8
        assert rep.convexity_violation < 1e-12
        assert rep.log_mgf_max_error < 1e-6

    def test_mgf_at_one(self):
        rep = validate_hamiltonians(2.0, n_t=13)
        # t grid runs over [-2, 1.95]; log MGF at t=1 is lgamma(1) - lgamma(2) = 0
        x = np.exp(log_G(2.0, np.linspace(-30, 60, 200001)))
        t = np.linspace(-30, 60, 200001)
        assert abs(math.log(np.trapezoid(np.exp(t) * x, t))) < 1e-6
        assert np.all(np.isfinite(rep.log_mgf_numeric))
