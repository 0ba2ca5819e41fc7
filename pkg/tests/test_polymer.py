import math

import numpy as np
import pytest

from loggamma_gibbs.kpz_constants import d_theta, h_theta, kpz_report
from loggamma_gibbs.numerics import DomainError, RngStream, digamma, polygamma
from loggamma_gibbs.polymer import (
    DisorderMatrix,
    PiecewiseLinear,
    SizeGuardError,
    brute_force_log_tau,
    compute_z_triangle,
    log_partition,
    log_partition_last_row,
    log_partition_replicas,
    replica_stream,
    rescaled_free_energy,
    rescaled_profile,
    rescaled_profile_airy,
    sample_disorder,
    tuple_incidence,
)


def paths_logsum(lw, n, N):
    """Independent oracle: recursive enumeration of every up-right path to (n, N)."""
    terms = []

    def walk(i, j, acc):
        acc += lw[i, j]
        if i == n - 1 and j == N - 1:
            terms.append(acc)
            return
        if i < n - 1:
            walk(i + 1, j, acc)
        if j < N - 1:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    t = np.array(terms)
    m = t.max()
    return m + math.log(np.exp(t - m).sum())


def test_disorder_statistics():
    d = sample_disorder(1000, 1000, 1.7, RngStream(1))
    lw = d.log_weights.ravel()
    se = math.sqrt(polygamma(1, 1.7) / lw.size)
    assert abs(lw.mean() + digamma(1.7)) < 3 * se
    assert abs(lw.var() / polygamma(1, 1.7) - 1) < 0.01


def test_disorder_reproducible():
    a = sample_disorder(7, 5, 2.0, RngStream(4, 2)).log_weights
    b = sample_disorder(7, 5, 2.0, RngStream(4, 2)).log_weights
    assert a.shape == (7, 5) and np.array_equal(a, b)


def test_disorder_domain():
    with pytest.raises(DomainError):
        sample_disorder(0, 3, 1.0, RngStream(0))
    with pytest.raises(DomainError):
        DisorderMatrix(1.0, np.array([[np.inf]]))


def test_small_cases():
    lw = np.log(np.array([[2.0, 3.0], [5.0, 7.0]]))
    t = log_partition(DisorderMatrix(1.0, lw))
    assert t.at(1, 1) == pytest.approx(math.log(2.0))
    # two paths: (1,1)(1,2)(2,2) and (1,1)(2,1)(2,2)
    assert t.at(2, 2) == pytest.approx(math.log(2 * 3 * 7 + 2 * 5 * 7))


def test_dp_against_recursive_enumeration():
    rng = RngStream(21)
    for _ in range(100):
        d = sample_disorder(6, 6, 1.3, rng)
        t = log_partition(d).values
        for n in range(1, 7):
            for N in range(1, 7):
                ref = paths_logsum(d.log_weights, n, N)
                assert abs(t[n - 1, N - 1] - ref) <= 1e-12 * max(1.0, abs(ref))


def test_tau_single_path_equals_dp():
    d = sample_disorder(5, 4, 2.0, RngStream(3))
    t = log_partition(d)
    for k in range(1, 5):
        for n in range(1, 6):
            assert brute_force_log_tau(d, k, 1, n) == pytest.approx(t.at(n, k), abs=1e-12)


def test_tau_conventions():
    d = sample_disorder(4, 4, 1.0, RngStream(5))
    assert brute_force_log_tau(d, 4, 3, 2) == -np.inf
    # l = k: unique tuple filling the first l columns of the k x n box
    k = 3
    val = brute_force_log_tau(d, k, k, 4)
    assert tuple_incidence(k, k, 4).shape[0] == 1
    inc = tuple_incidence(k, k, 4)[0].reshape(4, k)
    assert val == pytest.approx(float(np.sum(d.log_weights[:4, :k] * inc)))


def _cells(c0, r0, c1, r1):
    """All up-right paths as lists of (col, row), 0-based."""
    if c0 == c1 and r0 == r1:
        return [[(c0, r0)]]
    out = []
    if c0 < c1:
        out += [[(c0, r0)] + p for p in _cells(c0 + 1, r0, c1, r1)]
    if r0 < r1:
        out += [[(c0, r0)] + p for p in _cells(c0, r0 + 1, c1, r1)]
    return out


def test_pairs_against_independent_enumeration():
    # two vertex-disjoint paths: (1,1)->(n,k-1) and (1,2)->(n,k)
    d = sample_disorder(4, 4, 1.0, RngStream(31))
    k, n = 4, 4
    lw = d.log_weights
    terms = []
    for p in _cells(0, 0, n - 1, k - 2):
        for q in _cells(0, 1, n - 1, k - 1):
            if not set(p) & set(q):
                terms.append(sum(lw[c] for c in p) + sum(lw[c] for c in q))
    t = np.array(terms)
    ref = t.max() + math.log(np.exp(t - t.max()).sum())
    assert brute_force_log_tau(d, k, 2, n) == pytest.approx(ref, abs=1e-12)
    assert tuple_incidence(k, 2, n).shape[0] == len(terms)
    assert np.all(tuple_incidence(k, 2, n) <= 1)


def test_size_guard():
    with pytest.raises(SizeGuardError):
        tuple_incidence(6, 3, 6, max_tuples=10)


def test_z_triangle():
    d = sample_disorder(5, 4, 1.5, RngStream(6))
    n = 3
    z = compute_z_triangle(d, n)
    t = log_partition(d)
    for k in range(1, 5):
        assert z.log_rows[k - 1][0] == pytest.approx(t.at(n, k), abs=1e-12)
        for l in range(1, min(k, n) + 1):
            tau = brute_force_log_tau(d, k, l, n)
            assert np.sum(z.log_rows[k - 1][:l]) == pytest.approx(tau, abs=1e-12)
        assert np.all(np.exp(z.log_rows[k - 1]) > 0)
    assert z.log_rows[3].size == 3


def test_transpose_symmetry():
    d = sample_disorder(5, 6, 1.0, RngStream(7))
    assert np.array_equal(log_partition(d).values.T, log_partition(d.transpose()).values)


def test_monotone_in_weights():
    d = sample_disorder(5, 5, 1.0, RngStream(8))
    base = log_partition(d).values
    for i in range(5):
        for j in range(5):
            lw = d.log_weights.copy()
            lw[i, j] += 0.3
            new = log_partition(DisorderMatrix(1.0, lw)).values
            assert np.all(new >= base)


def test_streaming_matches_full_dp():
    rng = replica_stream(5, 1, 0)
    row = log_partition_last_row(9, 600, 1.0, rng, chunk=64)
    d = sample_disorder(9, 600, 1.0, replica_stream(5, 1, 0))
    assert np.allclose(row, log_partition(d).values[:, -1], rtol=0, atol=1e-9)


def test_replicas_deterministic():
    a = log_partition_replicas(6, 5, 2.0, 3, seed=1)
    b = log_partition_replicas(6, 5, 2.0, 3, seed=1)
    assert np.array_equal(a, b) and a.shape == (3, 6)
    assert not np.array_equal(a[0], a[1])


def test_rescaled_free_energy():
    N, n, th = 64, 64, 2.0
    slope = 1 / (N ** (1 / 3) * d_theta(th, n / N))
    assert rescaled_free_energy(-N * h_theta(th, 1.0), n, N, th) == pytest.approx(0.0, abs=1e-12)
    assert rescaled_free_energy(1.0, n, N, th) - rescaled_free_energy(0.0, n, N, th) == pytest.approx(slope)
    rep = kpz_report(2.0, 1.0)
    assert rescaled_free_energy(0.0, n, N, th) == pytest.approx(N * rep.h / (N ** (1 / 3) * rep.d))


def test_profile_lattice_values():
    N, th, r, T = 64, 2.0, 1.0, 1.0
    row = np.cumsum(np.linspace(-1, 1, 120))
    f = rescaled_profile(row, N, th, r, T)
    rep = kpz_report(th, r)
    s = N ** (2 / 3)
    for m in (-5, 0, 7):
        x = m / s
        ref = (row[N + m - 1] + rep.h * N + rep.h_prime * m) / N ** (1 / 3)
        assert f(x) == pytest.approx(ref, abs=1e-12)
    x0, x1 = 3 / s, 4 / s
    assert f(0.5 * (x0 + x1)) == pytest.approx(0.5 * (f(x0) + f(x1)), abs=1e-12)
    g = rescaled_profile(row, N, th, r, 2.0)
    assert g(5 / s) == pytest.approx(f(5 / s), abs=1e-12)
    assert f.domain == (-1.0, 1.0)


def test_profile_airy():
    N, th, r = 256, 2.0, 1.0
    row = np.cumsum(RngStream(3).standard_normal(600) - 1.1544)
    ft = rescaled_profile_airy(row, N, th, r)
    f = rescaled_profile(row, N, th, r, 5.9)
    rep = kpz_report(th, r)
    s = N ** (2 / 3)
    for m in (-3, 0, 9):
        x = m / (rep.kappa * s)
        assert ft(x) == pytest.approx(f(rep.kappa * x) / (math.sqrt(2) * rep.d), abs=1e-12)
    a = ft.domain[1]
    assert ft(a + 5.0) == ft(a)
    with pytest.raises(DomainError):
        rescaled_profile_airy(row, 64, th, r)


def test_profile_airy_at_zero_matches_free_energy():
    N, th, r = 256, 2.0, 1.0
    row = log_partition_last_row(N + 300, N, th, RngStream(17))
    ft = rescaled_profile_airy(row, N, th, r)
    F = rescaled_free_energy(row[N - 1], N, N, th)
    assert abs(ft(0.0) - F / math.sqrt(2)) < 1e-6


def test_piecewise_linear_checks():
    with pytest.raises(DomainError):
        PiecewiseLinear([0.0, 0.0], [1.0, 2.0])
    f = PiecewiseLinear([0.0, 1.0, 2.0], [0.0, 2.0, 1.0]).restrict(0.5, 1.5)
    assert f.domain == (0.5, 1.5)
    assert f(1.0) == 2.0
