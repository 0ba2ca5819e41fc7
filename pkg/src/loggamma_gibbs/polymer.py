"""Log-gamma directed polymer: disorder, partition functions and rescaled observables.

Coordinates follow the matrix convention ``d[i, j]`` with ``i`` the column
(1..n) and ``j`` the row (1..N); an up-right path from (1, 1) to (n, N)
collects the product of the weights it visits.  Everything is kept as logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .kpz_constants import d_theta, h_theta, h_theta_derivs, kappa_theta
from .numerics import DomainError, RngStream, sample_gamma
from .rsk_chain import ZTriangle

MAX_TUPLES = 10**7
LOG_ZERO = -np.inf


class SizeGuardError(RuntimeError):
    """Exhaustive enumeration would exceed the configured bound."""


@dataclass
class DisorderMatrix:
    theta: float
    log_weights: np.ndarray  # shape (n_cols, n_rows)

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.log_weights.ndim != 2 or min(self.log_weights.shape) < 1:
            raise DomainError("log_weights must be a nonempty 2-D array")
        if not np.all(np.isfinite(self.log_weights)):
            raise DomainError("log_weights must be finite")

    @property
    def n_cols(self) -> int:
        return self.log_weights.shape[0]

    @property
    def n_rows(self) -> int:
        return self.log_weights.shape[1]

    def transpose(self) -> "DisorderMatrix":
        return DisorderMatrix(self.theta, self.log_weights.T.copy())


@dataclass
class LogPartitionTable:
    values: np.ndarray  # values[n-1, N-1] = log Z^{n,N}

    def at(self, n: int, N: int) -> float:
        return float(self.values[n - 1, N - 1])


def _draw_log_weights(n_cols, n_rows, theta, rng):
    # rows are drawn one after another so that row-streaming code sees the same numbers
    g = sample_gamma(theta, rng, size=(n_rows, n_cols))
    return -np.log(g)


def sample_disorder(n_cols: int, n_rows: int, theta: float, rng: RngStream) -> DisorderMatrix:
    """i.i.d. log inverse-gamma(theta) weights, log d = -log(Gamma(theta) variate)."""
    if n_cols < 1 or n_rows < 1:
        raise DomainError("dimensions must be >= 1")
    if not theta > 0:
        raise DomainError("theta must be > 0")
    return DisorderMatrix(theta, _draw_log_weights(n_cols, n_rows, theta, rng).T.copy())


@numba.njit(cache=True, inline="always")
def _lae(a, b):
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@numba.njit(cache=True, nogil=True)
def _dp_table(lw):
    n, m = lw.shape
    out = np.empty((n, m))
    out[0, 0] = lw[0, 0]
    for j in range(1, m):
        out[0, j] = out[0, j - 1] + lw[0, j]
    for i in range(1, n):
        out[i, 0] = out[i - 1, 0] + lw[i, 0]
        for j in range(1, m):
            out[i, j] = _lae(out[i - 1, j], out[i, j - 1]) + lw[i, j]
    return out


@numba.njit(cache=True, nogil=True)
def _dp_stream_rows(lw_rows, cur):
    """Advance the row vector cur[i] = log Z^{i+1, j} through the given rows."""
    n_rows, n = lw_rows.shape
    for jj in range(n_rows):
        cur[0] = cur[0] + lw_rows[jj, 0]
        for i in range(1, n):
            cur[i] = _lae(cur[i - 1], cur[i]) + lw_rows[jj, i]
    return cur


def log_partition(d: DisorderMatrix) -> LogPartitionTable:
    """All log Z^{n,N} for n <= n_cols, N <= n_rows via the log-sum-exp recursion."""
    return LogPartitionTable(_dp_table(np.ascontiguousarray(d.log_weights)))


def log_partition_last_row(
    n_cols: int, n_rows: int, theta: float, rng: RngStream, chunk: int = 256
) -> np.ndarray:
    """log Z^{n, n_rows} for n = 1..n_cols without storing the disorder.

    Consumes the stream exactly like :func:`sample_disorder` with the same sizes.
    """
    first = _draw_log_weights(n_cols, 1, theta, rng)[0]
    cur = np.cumsum(first)
    done = 1
    while done < n_rows:
        k = min(chunk, n_rows - done)
        lw = _draw_log_weights(n_cols, k, theta, rng)
        # a row is consumed left to right, starting from the value below
        cur = _dp_stream_rows(lw, cur)
        done += k
    return cur


def replica_stream(seed: int, tag: int, index: int) -> RngStream:
    """Stream for replica ``index`` of experiment ``tag``."""
    return RngStream(seed, (int(tag) << 32) | int(index))


def log_partition_replicas(
    n_cols: int, n_rows: int, theta: float, n_replicas: int, seed: int, tag: int = 0
) -> np.ndarray:
    """Array (n_replicas, n_cols) of log Z^{n, n_rows}, replica i on its own stream."""
    out = np.empty((n_replicas, n_cols))
    for rep in range(n_replicas):
        out[rep] = log_partition_last_row(n_cols, n_rows, theta, replica_stream(seed, tag, rep))
    return out


# ---------------------------------------------------------------------------
# exhaustive enumeration (oracle)


def _paths(c0, r0, c1, r1, n_rows_box):
    """All up-right paths between two cells as tuples of flat cell indices."""
    out = []

    def rec(c, r, acc):
        acc.append((c - 1) * n_rows_box + (r - 1))
        if c == c1 and r == r1:
            out.append(tuple(acc))
        else:
            if c < c1:
                rec(c + 1, r, acc)
            if r < r1:
                rec(c, r + 1, acc)
        acc.pop()

    if c1 >= c0 and r1 >= r0:
        rec(c0, r0, [])
    return out


@lru_cache(maxsize=256)
def tuple_incidence(k: int, l: int, n: int, max_tuples: int = MAX_TUPLES) -> np.ndarray:
    """0/1 matrix (tuples x cells of the n-by-k box) of non-intersecting l-tuples.

    Path r runs from (1, r) to (n, k + r - l).  The search is depth first over
    r with a bitmask of occupied cells; ``max_tuples`` bounds the number of
    partial tuples visited.
    """
    paths = []
    for r in range(1, l + 1):
        ps = _paths(1, r, n, k + r - l, k)
        paths.append([(sum(1 << c for c in p), p) for p in ps])
    rows = []
    visited = 0

    def rec(r, mask, cells):
        nonlocal visited
        if r == l:
            rows.append(cells)
            return
        for pmask, p in paths[r]:
            visited += 1
            if visited > max_tuples:
                raise SizeGuardError(f"more than {max_tuples} tuples for (k={k}, l={l}, n={n})")
            if pmask & mask == 0:
                rec(r + 1, mask | pmask, cells + p)

    rec(0, 0, ())
    inc = np.zeros((len(rows), n * k))
    for t, cells in enumerate(rows):
        inc[t, list(cells)] = 1.0
    inc.setflags(write=False)
    return inc


def _check_tau_args(n_cols, n_rows, k, l, n):
    if not (1 <= l <= k <= n_rows and 1 <= n <= n_cols):
        raise DomainError("need 1 <= l <= k <= n_rows and 1 <= n <= n_cols")


def brute_force_log_tau(d: DisorderMatrix, k: int, l: int, n: int, max_tuples: int = MAX_TUPLES) -> float:
    """log tau_{k,l}(n) by summing over every non-intersecting l-tuple.

    Returns ``-inf`` (log of zero) when n < l, by convention.
    """
    _check_tau_args(d.n_cols, d.n_rows, k, l, n)
    return float(brute_force_log_tau_batch(d.log_weights[None], k, l, n, max_tuples)[0])


def brute_force_log_tau_batch(log_weights, k: int, l: int, n: int, max_tuples: int = MAX_TUPLES) -> np.ndarray:
    """Same as :func:`brute_force_log_tau` for a stack (R, n_cols, n_rows) of disorders."""
    from scipy.special import logsumexp

    lw = np.asarray(log_weights, dtype=float)
    _check_tau_args(lw.shape[1], lw.shape[2], k, l, n)
    if n < l:
        return np.full(lw.shape[0], LOG_ZERO)
    inc = tuple_incidence(k, l, n, max_tuples)
    if inc.shape[0] == 0:
        return np.full(lw.shape[0], LOG_ZERO)
    box = lw[:, :n, :k].reshape(lw.shape[0], -1)
    return logsumexp(box @ inc.T, axis=1)


def log_z_entries_batch(log_weights, n: int, max_tuples: int = MAX_TUPLES) -> dict:
    """{(k, l): log z_{k,l}(n) over the stack} for 1 <= l <= min(k, n)."""
    lw = np.asarray(log_weights, dtype=float)
    out = {}
    for k in range(1, lw.shape[2] + 1):
        prev = np.zeros(lw.shape[0])
        for l in range(1, min(k, n) + 1):
            tau = brute_force_log_tau_batch(lw, k, l, n, max_tuples)
            out[(k, l)] = tau - prev
            prev = tau
    return out


def compute_z_triangle(d: DisorderMatrix, n: int, max_tuples: int = MAX_TUPLES) -> ZTriangle:
    """z_{k,l}(n) = tau_{k,l}(n) / tau_{k,l-1}(n) for every row k of the disorder."""
    if not 1 <= n <= d.n_cols:
        raise DomainError("need 1 <= n <= n_cols")
    ent = log_z_entries_batch(d.log_weights[:n][None], n, max_tuples)
    rows = [np.array([ent[(k, l)][0] for l in range(1, min(k, n) + 1)]) for k in range(1, d.n_rows + 1)]
    return ZTriangle(rows)


# ---------------------------------------------------------------------------
# rescaled observables


def rescaled_free_energy(logZ, n: int, N: int, theta: float):
    """(log Z + N h(n/N)) / (N^{1/3} d(n/N)); affine in ``logZ``."""
    if n < 1 or N < 1:
        raise DomainError("n and N must be >= 1")
    x = n / N
    return (np.asarray(logZ, dtype=float) + N * h_theta(theta, x)) / (N ** (1 / 3) * d_theta(theta, x))


@dataclass
class PiecewiseLinear:
    """Continuous function through ``(xs, ys)``; constant beyond the end nodes."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.ys.shape or self.xs.size < 1:
            raise DomainError("xs and ys must be matching 1-D arrays")
        if np.any(np.diff(self.xs) <= 0):
            raise DomainError("breakpoints must be strictly increasing")

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])

    def restrict(self, a: float, b: float) -> "PiecewiseLinear":
        inner = (self.xs > a) & (self.xs < b)
        xs = np.concatenate([[a], self.xs[inner], [b]])
        return PiecewiseLinear(xs, self(xs))


def _row_lookup(log_z_row, n0, ns):
    idx = np.asarray(ns) - n0
    if idx.min() < 0 or idx.max() >= len(log_z_row):
        raise DomainError(
            f"row covers n in [{n0}, {n0 + len(log_z_row) - 1}] but [{ns.min()}, {ns.max()}] is needed"
        )
    return np.asarray(log_z_row, dtype=float)[idx]


def rescaled_profile(log_z_row, N: int, theta: float, r: float, T: float, n0: int = 1) -> PiecewiseLinear:
    """Centred, N^{1/3}-scaled free energy profile on [-T, T].

    ``log_z_row[i]`` is log Z^{n0 + i, N}.  Lattice points are x = m N^{-2/3}
    for integers m, values are linearly interpolated between them.
    """
    scale = N ** (2 / 3)
    m_max = math.ceil(T * scale - 1e-9)
    ms = np.arange(-m_max, m_max + 1)
    ns = math.floor(r * N) + ms
    lz = _row_lookup(log_z_row, n0, ns)
    h1, _ = h_theta_derivs(theta, r)
    vals = (lz + h_theta(theta, r) * N + h1 * ms) / N ** (1 / 3)
    return PiecewiseLinear(ms / scale, vals).restrict(-T, T)


def rescaled_profile_airy(log_z_row, N: int, theta: float, r: float, n0: int = 1) -> PiecewiseLinear:
    """Profile in Airy units: 2^{-1/2} d^{-1} f(kappa x), constant outside [-A_N, A_N]."""
    scale = N ** (2 / 3)
    t_n = math.floor(scale * math.log(N))
    if r * N < t_n + 2:
        raise DomainError("N too small for the window")
    kappa = kappa_theta(theta, r)
    ms = np.arange(-t_n, t_n + 1)
    ns = math.floor(r * N) + ms
    lz = _row_lookup(log_z_row, n0, ns)
    h1, _ = h_theta_derivs(theta, r)
    vals = (lz + h_theta(theta, r) * N + h1 * ms) / (math.sqrt(2.0) * d_theta(theta, r) * N ** (1 / 3))
    return PiecewiseLinear(ms / (kappa * scale), vals)
