import json
import math
import warnings

import mpmath
import numpy as np
import pytest
from scipy.special import airy

from loggamma_gibbs.numerics import DomainError, RngStream
from loggamma_gibbs.polymer import PiecewiseLinear
from loggamma_gibbs.verify import (
    StatReport,
    build_tw_table,
    bridge_midpoint_sample,
    count_inversions,
    exponent_fit,
    gibbs_invariance_check,
    ks_distance,
    modulus_of_continuity,
    monotone_check,
    tw_convergence_scan,
    tw_gue_cdf,
)

AI0 = mpmath.mpf("0.355028053887817239260063186004")
AIP0 = mpmath.mpf("-0.258819403792806798405183560189")


def airy_series(x, terms=200):
    """Ai(x) from its Maclaurin series in 60-digit arithmetic."""
    with mpmath.workdps(60):
        x = mpmath.mpf(x)
        f = g = mpmath.mpf(0)
        tf, tg = mpmath.mpf(1), x
        for k in range(terms):
            f += tf
            g += tg
            tf *= x**3 / ((3 * k + 2) * (3 * k + 3))
            tg *= x**3 / ((3 * k + 3) * (3 * k + 4))
        return float(AI0 * f + AIP0 * g)


def test_ks_examples():
    assert ks_distance([1, 2, 3], [1.5, 2.5, 3.5]) == pytest.approx(1 / 3)
    assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert ks_distance([0.5], lambda s: np.clip(s, 0, 1)) == pytest.approx(0.5)
    x = RngStream(0).uniform(1000)
    from scipy.stats import kstest

    assert ks_distance(x, lambda s: s) == pytest.approx(kstest(x, "uniform").statistic, abs=1e-15)
    with pytest.raises(DomainError):
        ks_distance([], [1.0])


@pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, 0.0, 0.7, 2.5, 5.0])
def test_airy_against_series(x):
    assert abs(airy(x)[0] - airy_series(x)) < 1e-12


def test_tw_shape():
    s = np.linspace(-8, 5, 60)
    F = tw_gue_cdf(s)
    assert np.all(np.diff(F) > 0)
    assert tw_gue_cdf(-10.0) < 1e-30 and 1 - tw_gue_cdf(6.0) < 1e-8


def test_tw_right_tail_asymptotic():
    # far right, 1 - det(I - K) is the trace of K up to O(trace^2)
    from scipy.integrate import quad

    for s in (4.0, 5.0):
        tr = quad(lambda x: airy(x)[1] ** 2 - x * airy(x)[0] ** 2, s, 40, epsabs=0, epsrel=1e-12)[0]
        assert abs((1 - tw_gue_cdf(s)) / tr - 1) < 1e-3
        # leading asymptotic exp(-4/3 s^{3/2}) / (16 pi s^{3/2}), correction O(s^{-3/2})
        lead = math.exp(-4 / 3 * s**1.5) / (16 * math.pi * s**1.5)
        assert abs(tr / lead - 1) < 2 / s**1.5


def test_tw_left_tail_asymptotic():
    # log F(s) ~ -|s|^3/12 - log|s|/8 + log(2^{1/24} e^{zeta'(-1)})
    c = math.log(2) / 24 + float(mpmath.zeta(-1, derivative=1))
    for s in (-6.0, -8.0):
        ref = -abs(s) ** 3 / 12 - math.log(abs(s)) / 8 + c
        assert abs(math.log(tw_gue_cdf(s)) - ref) < 0.01


def test_tw_node_doubling_and_moments():
    probes = np.array([-5.0, -2.0, -1.0, 1.0, 3.0])
    assert np.max(np.abs(tw_gue_cdf(probes, 64) - tw_gue_cdf(probes, 128))) < 1e-9
    t = build_tw_table()
    # tabulated values of the GUE Tracy-Widom mean and variance
    assert abs(t.mean + 1.7710868074) < 1e-6
    assert abs(t.variance - 0.8131947928) < 1e-6
    assert t(-20) == 0.0 and t(20) == 1.0


def test_tw_warns_outside_range():
    with pytest.warns(RuntimeWarning):
        tw_gue_cdf(-11.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tw_gue_cdf(0.0)


def brute_modulus(f, delta):
    a, b = f.domain
    pts = np.concatenate([np.linspace(a, b, 1501), f.xs, f.xs - delta, f.xs + delta])
    pts = np.unique(np.clip(pts, a, b))
    v = f(pts)
    close = np.abs(pts[:, None] - pts[None, :]) <= delta + 1e-12
    return float(np.max(np.abs(v[:, None] - v[None, :])[close]))


def test_modulus_against_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        xs = np.sort(rng.uniform(-1, 1, 25))
        f = PiecewiseLinear(xs, np.cumsum(rng.normal(size=25)))
        for d in (0.05, 0.2, 0.9):
            assert abs(modulus_of_continuity(f, d) - brute_modulus(f, d)) < 1e-12


def test_modulus_simple_cases():
    lin = PiecewiseLinear([0.0, 2.0], [0.0, 6.0])
    assert modulus_of_continuity(lin, 0.5) == pytest.approx(1.5)
    const = PiecewiseLinear([0.0, 1.0, 2.0], [4.0, 4.0, 4.0])
    assert modulus_of_continuity(const, 0.3) == 0.0
    f = PiecewiseLinear([0.0, 0.3, 0.5, 1.0], [0.0, 1.0, -1.0, 0.2])
    w1, w2 = modulus_of_continuity(f, 0.1), modulus_of_continuity(f, 0.2)
    assert w1 <= w2 <= 2 * w1 + 1e-12
    assert modulus_of_continuity(f, 0.2, (0.5, 1.0)) == pytest.approx(0.2 * 1.2 / 0.5)
    with pytest.raises(DomainError):
        modulus_of_continuity(f, 0.0)


def test_exponent_fit():
    pairs = [(n, 3.0 * n ** (2 / 3)) for n in (64, 128, 256, 512)]
    slope, icpt, r2 = exponent_fit(pairs)
    assert slope == pytest.approx(2 / 3, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0), abs=1e-12)
    assert r2 == pytest.approx(1.0)
    with pytest.raises(DomainError):
        exponent_fit([(1, 1), (2, 2)])
    with pytest.raises(DomainError):
        exponent_fit([(4, 1), (4, 2), (4, 3)])
    with pytest.raises(DomainError):
        exponent_fit([(1, 1), (2, -2), (3, 3)])


def test_monotone_check_modes():
    assert monotone_check(1.0, 8, 100, RngStream(1), mode="equal").statistic == 0
    assert monotone_check(1.0, 8, 100, RngStream(2), mode="shift").statistic == 0
    assert monotone_check(1.0, 8, 200, RngStream(3)).passed
    ctl = monotone_check(1.0, 8, 100, RngStream(4), control=True)
    assert ctl.statistic >= 1 and ctl.passed and ctl.direction == "ge"
    with pytest.raises(DomainError):
        monotone_check(1.0, 11, 1, RngStream(0))


def test_gibbs_degenerate_window():
    rep = gibbs_invariance_check(3, 1.0, (2, 3), 50, RngStream(5))
    assert rep.statistic == 0.0 and rep.passed
    with pytest.raises(DomainError):
        gibbs_invariance_check(3, 1.0, (1, 3), 5, RngStream(5))


def test_stat_report_json():
    rep = StatReport("x", np.float64(0.01), 0.02, 100, metadata={"arr": np.arange(2)})
    d = json.loads(rep.to_json())
    assert d["pass"] is True and d["statistic"] == 0.01 and d["metadata"]["arr"] == [0, 1]
    assert StatReport("y", 3.0, 1.0, 5, direction="ge").passed
    assert not StatReport("z", 3.0, 1.0, 5).passed
    with pytest.raises(DomainError):
        StatReport("w", 0.0, 0.0, 1, direction="lt")


def test_scan_helpers():
    assert count_inversions([3, 2, 2.5, 1, 1.5]) == 2
    with pytest.raises(DomainError):
        tw_convergence_scan(2.0, 1.0, [32, 16], 4, 0)
    reps = tw_convergence_scan(2.0, 1.0, [16, 32], 20, 0)
    assert [r.metadata["N"] for r in reps] == [16, 32]
    assert all(0 < r.statistic < 1 for r in reps)


def test_bridge_midpoint_sample():
    x = bridge_midpoint_sample(2.0, 1.0, 16, 4000, RngStream(6))
    assert x.shape == (4000,)
    assert abs(x.mean()) < 4 * x.std() / math.sqrt(x.size)
