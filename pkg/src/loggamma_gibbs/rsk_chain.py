"""Geometric RSK dynamics on triangular arrays.

A state is a triangle z = (z^{[1]}, ..., z^{[N]}) with z^{[k]} in (0, inf)^k.
One step of the chain updates level 1 by z -> d z and then level k from
(old level k-1, old level k, new level k-1) with a fresh inverse-gamma d.
All arithmetic is done on log z; the additive terms of the level update go
through logaddexp.

States are batched: level k is an array of shape (R, k) for R replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import DomainError, RngStream, sample_gamma, sample_log_gig0

LOG2 = math.log(2.0)


@dataclass
class ZTriangle:
    """Triangular array stored as logs; ``log_rows[k-1][l-1] = log z_{k,l}``.

    Rows may be shorter than k (the polymer triangle at time n < k only has
    min(k, n) entries).
    """

    log_rows: list

    def __post_init__(self):
        self.log_rows = [np.asarray(r, dtype=float) for r in self.log_rows]
        for k, row in enumerate(self.log_rows, start=1):
            if row.ndim != 1 or row.size > k:
                raise DomainError(f"row {k} must have at most {k} entries")
            if not np.all(np.isfinite(row)):
                raise DomainError("entries must be finite and positive")

    @classmethod
    def from_values(cls, rows) -> "ZTriangle":
        rows = [np.asarray(r, dtype=float) for r in rows]
        if any(np.any(~(r > 0)) for r in rows):
            raise DomainError("entries must be > 0")
        return cls([np.log(r) for r in rows])

    @property
    def N(self) -> int:
        return len(self.log_rows)

    @property
    def rows(self) -> list:
        return [np.exp(r) for r in self.log_rows]

    def value(self, k: int, l: int) -> float:
        return float(math.exp(self.log_rows[k - 1][l - 1]))


@dataclass
class ChainTrace:
    """History of a batch of chains; ``levels[n][k-1]`` has shape (R, k)."""

    theta: float
    M: float
    levels: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.levels[0])

    @property
    def n_steps(self) -> int:
        return len(self.levels) - 1

    @property
    def n_replicas(self) -> int:
        return self.levels[0][0].shape[0]

    def state(self, n: int, replica: int = 0) -> ZTriangle:
        return ZTriangle([lev[replica] for lev in self.levels[n]])

    @property
    def states(self) -> list:
        return [self.state(n) for n in range(len(self.levels))]

    def log_entry(self, k: int, l: int, n: int) -> np.ndarray:
        """log z_{k,l}(n) across replicas."""
        return self.levels[n][k - 1][:, l - 1]


def initial_top_row(N: int, M: float, centered: bool = True) -> np.ndarray:
    """log of the initial top row, l = 1..N.

    The uncentred row is log y_l = -M (N - l)/2.  Kernels and dynamics are
    homogeneous of degree one, so starting from c*y multiplies every later
    state by c; the centred row (sum of logs zero) is the scaling for which
    z(n) converges to the polymer triangle as M grows.  Without centring all
    entries carry the extra factor exp(-M (N - 1)/4).
    """
    row = -M * (N - np.arange(1, N + 1)) / 2.0
    if centered:
        row = row + M * (N - 1) / 4.0
    return row


def sample_kbar_init(y, theta: float, rng: RngStream, n_replicas: int | None = None, log_input: bool = False):
    """Fill the triangle below a fixed top row, one row at a time downwards.

    Entry z_{k,l} given row k+1 has density proportional to
    exp(-z/z_{k+1,l} - z_{k+1,l+1}/z) dz/z, i.e. GIG(0, 2 z_{k+1,l+1}, 2/z_{k+1,l}).
    Returns a :class:`ZTriangle` when ``n_replicas`` is None, otherwise the
    batched list of levels.
    """
    ly = np.asarray(y, dtype=float)
    if not log_input:
        if np.any(~(ly > 0)):
            raise DomainError("top row must be positive")
        ly = np.log(ly)
    if ly.ndim != 1 or ly.size < 1:
        raise DomainError("top row must be a nonempty vector")
    if not theta > 0:
        raise DomainError("theta must be > 0")
    R = 1 if n_replicas is None else n_replicas
    N = ly.size
    levels = [None] * N
    levels[N - 1] = np.tile(ly, (R, 1))
    for k in range(N - 1, 0, -1):
        above = levels[k]
        levels[k - 1] = sample_log_gig0(LOG2 + above[:, 1:], LOG2 - above[:, :-1], rng)
    if n_replicas is None:
        return ZTriangle([lev[0] for lev in levels])
    return levels


def step_l_kernel_log(lx, ly, lxt, ld):
    """Level update in log coordinates, batched on the leading axis.

    lx, lxt: (..., k-1); ly: (..., k); ld: (...,).
    """
    lx, ly, lxt = np.asarray(lx, float), np.asarray(ly, float), np.asarray(lxt, float)
    k = ly.shape[-1]
    if k < 2 or lx.shape[-1] != k - 1 or lxt.shape[-1] != k - 1:
        raise DomainError("need x, x_tilde of length k-1 and y of length k >= 2")
    s = np.logaddexp(ly[..., : k - 1], lxt)  # log(y_l + xt_l), l = 1..k-1
    out = np.empty(np.broadcast_shapes(ly.shape, lx.shape[:-1] + (k,)))
    out[..., 0] = np.asarray(ld) + s[..., 0]
    base = ly[..., : k - 1] + lxt - lx - s  # log(y_l xt_l / (x_l (y_l + xt_l)))
    out[..., 1 : k - 1] = base[..., : k - 2] + s[..., 1:]
    out[..., k - 1] = ly[..., k - 1] + base[..., k - 2]
    return out


def step_l_kernel(x, y, x_tilde, d):
    """The level-k update with a given weight d (all arguments positive)."""
    arrs = [np.asarray(a, dtype=float) for a in (x, y, x_tilde, d)]
    if any(np.any(~(a > 0)) for a in arrs):
        raise DomainError("inputs must be positive")
    return np.exp(step_l_kernel_log(*(np.log(a) for a in arrs)))


def step_pi_levels(levels, theta: float, rng: RngStream) -> list:
    """One transition of a batch: N * R fresh inverse-gamma variates."""
    R = levels[0].shape[0]
    N = len(levels)
    # column k-1 feeds level k
    ld = -np.log(sample_gamma(theta, rng, size=(R, N)))
    new = [levels[0] + ld[:, :1]]
    for k in range(2, N + 1):
        new.append(step_l_kernel_log(levels[k - 2], levels[k - 1], new[k - 2], ld[:, k - 1]))
    return new


def step_pi(z: ZTriangle, theta: float, rng: RngStream) -> ZTriangle:
    levels = [row[None, :] for row in z.log_rows]
    if any(row.size != k for k, row in enumerate(z.log_rows, start=1)):
        raise DomainError("step_pi needs a full triangle")
    return ZTriangle([lev[0] for lev in step_pi_levels(levels, theta, rng)])


def run_chain_batch(
    N: int,
    theta: float,
    M: float,
    n_steps: int,
    n_replicas: int,
    rng: RngStream,
    init_rng: RngStream | None = None,
    centered: bool = True,
) -> ChainTrace:
    """R independent chains from the K-bar initial law over y^{0,M}.

    Step variates come from ``rng`` (exactly n_steps * N * R of them); the
    initial fill uses ``init_rng`` (default: a sibling stream of ``rng``).
    """
    if N < 1 or n_steps < 1 or n_replicas < 1:
        raise DomainError("N, n_steps and n_replicas must be >= 1")
    if not M > 0:
        raise DomainError("M must be > 0")
    if init_rng is None:
        init_rng = RngStream(rng.seed, rng.stream_id ^ (1 << 63))
    levels = sample_kbar_init(initial_top_row(N, M, centered), theta, init_rng, n_replicas, log_input=True)
    trace = ChainTrace(theta=theta, M=M, levels=[levels])
    for _ in range(n_steps):
        levels = step_pi_levels(levels, theta, rng)
        trace.levels.append(levels)
    return trace


def run_chain(N: int, theta: float, M: float, n_steps: int, rng: RngStream) -> ChainTrace:
    return run_chain_batch(N, theta, M, n_steps, 1, rng)


def extract_top_curves(trace: ChainTrace, K: int, window, replica: int = 0):
    """L_i(j) = log z_{N,i}(j) for i <= K and j in the window."""
    from .gibbs import LineEnsemble

    t0, t1 = window
    if not (2 <= K <= trace.N):
        raise DomainError("need 2 <= K <= N")
    if t0 < K or t1 > trace.n_steps or t0 > t1:
        raise DomainError("window must satisfy K <= T0 <= T1 <= n_steps")
    curves = {
        i: np.array([trace.levels[j][trace.N - 1][replica, i - 1] for j in range(t0, t1 + 1)])
        for i in range(1, K + 1)
    }
    return LineEnsemble(t0, t1, curves)


def top_curves_batch(trace: ChainTrace, K: int, window) -> np.ndarray:
    """Array (R, K, T1 - T0 + 1) with the same content as :func:`extract_top_curves`."""
    t0, t1 = window
    if not (1 <= K <= trace.N) or t0 < K or t1 > trace.n_steps or t0 > t1:
        raise DomainError("bad K or window")
    top = np.stack([trace.levels[j][trace.N - 1][:, :K] for j in range(t0, t1 + 1)], axis=-1)
    return top
