"""Single-curve (H, H^RW) Gibbs measures for the log-gamma Hamiltonians.

A curve l(1..T) has fixed ends l(1) = x, l(T) = y and lies above a bottom
curve z(1..T) (entries may be -inf).  Its law is the free walk bridge with
increment density G_theta reweighted by

    W = exp(-sum_{m=1}^{T-1} exp(z(m+1) - l(m))).

The m = 1 term is a constant.  Site s in 2..T-1 therefore interacts with
z(s+1), and the bridge part is unchanged if theta is replaced by any other
theta' (the exponential tilt exp(t (y - x)) is a constant).  Samplers use the
tilt with -Psi(theta') = (y - x)/(T - 1) so that the bridge is typical for
its walk.

Grand coupling: with h_n^{c,z}(y) the forward densities (x_0 = c, x_i
interacting with z_{i+1}), site s given l(s+1) = Y has density proportional
to h_{s-1}^{x,z'}(r) G(Y - r) where z'_j = z(j+1).  Sites are drawn from
T-1 down to 2 by inverting these CDFs with u_{s-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .numerics import (
    DomainError,
    Grid,
    GridDensity,
    RngStream,
    inverse_digamma,
    log_G,
    polygamma,
    sample_log_gig0,
)

LOG2 = math.log(2.0)
WINDOW_SD = 12.0
N_NODES = 4096
BOUNDARY_MASS = 1e-12
NOISE_FLOOR = 1e-11
EDGE_TOL = 1e-8
EDGE_LOG = math.log(EDGE_TOL)


class GridError(RuntimeError):
    """Grid window or resolution is insufficient for the requested density."""


# ---------------------------------------------------------------------------
# data


@dataclass
class BoundaryData:
    """Window 1..T with ends (x, y) and bottom curve z (``-inf`` allowed)."""

    T: int
    x: float
    y: float
    z: np.ndarray = None

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise DomainError("T must be an integer >= 2")
        self.T = int(self.T)
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError("x and y must be finite")
        self.x, self.y = float(self.x), float(self.y)
        if self.z is None:
            self.z = np.full(self.T, -np.inf)
        self.z = np.asarray(self.z, dtype=float).copy()
        if self.z.shape != (self.T,):
            raise DomainError("z must have T entries")
        if np.any(np.isnan(self.z)) or np.any(self.z == np.inf):
            raise DomainError("z entries must be finite or -inf")

    @property
    def z_active(self) -> np.ndarray:
        """Mask of finite bottom entries."""
        return np.isfinite(self.z)

    def shifted(self, dx=0.0, dy=0.0, dz=0.0) -> "BoundaryData":
        return BoundaryData(self.T, self.x + dx, self.y + dy, self.z + dz)

    def to_dict(self) -> dict:
        return {"T": self.T, "x": self.x, "y": self.y, "z": [None if not np.isfinite(v) else float(v) for v in self.z]}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundaryData":
        z = None if d.get("z") is None else [(-np.inf if v is None else v) for v in d["z"]]
        return cls(d["T"], d["x"], d["y"], z)


@dataclass
class LineEnsemble:
    """Curves ``L_i(j)`` for j in [index_lo, index_hi]; linear between integers."""

    index_lo: int
    index_hi: int
    curves: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.index_hi - self.index_lo + 1
        if n < 1:
            raise DomainError("empty index window")
        self.curves = {int(k): np.asarray(v, dtype=float).copy() for k, v in self.curves.items()}
        for k, v in self.curves.items():
            if v.shape != (n,):
                raise DomainError(f"curve {k} needs {n} values")
            if not np.all(np.isfinite(v)):
                raise DomainError("curve values must be finite")

    def __call__(self, i: int, t):
        js = np.arange(self.index_lo, self.index_hi + 1)
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.index_lo) or np.any(t_arr > self.index_hi):
            raise DomainError("evaluation point outside the index window")
        return np.interp(t, js, self.curves[i])

    def segment(self, i: int, a: int, b: int) -> np.ndarray:
        if a < self.index_lo or b > self.index_hi or a > b:
            raise DomainError("segment outside the index window")
        return self.curves[i][a - self.index_lo : b - self.index_lo + 1]

    def copy(self) -> "LineEnsemble":
        return LineEnsemble(self.index_lo, self.index_hi, {k: v.copy() for k, v in self.curves.items()})


# ---------------------------------------------------------------------------
# weights


def _exp_neg_H(gap):
    """exp(-e^gap), equal to 1 exactly where gap is -inf."""
    gap = np.asarray(gap, dtype=float)
    out = np.ones_like(gap)
    fin = np.isfinite(gap)
    with np.errstate(over="ignore"):
        out[fin] = np.exp(-np.exp(gap[fin]))
    return out


def _log_weight_terms(curve, z):
    """-H(z(m+1) - curve(m)) for m = a..b-1; zero for -inf entries."""
    curve = np.asarray(curve, dtype=float)
    z = np.asarray(z, dtype=float)
    zz = z[..., 1:]
    cc = curve[..., :-1]
    zz, cc = np.broadcast_arrays(zz, cc)
    out = np.zeros(zz.shape)
    fin = np.isfinite(zz)
    with np.errstate(over="ignore"):
        out[fin] = -np.exp(zz[fin] - cc[fin])
    return out


def log_boltzmann_weight(curve, z):
    return np.sum(_log_weight_terms(curve, z), axis=-1)


def boltzmann_weight(curve, z):
    """exp(-sum_{m=a}^{b-1} H(z(m+1) - curve(m))) with H(-inf) = 0."""
    curve = np.asarray(curve, dtype=float)
    z = np.asarray(z, dtype=float)
    if curve.shape[-1] != z.shape[-1]:
        raise DomainError("curve and z must be aligned")
    w = np.exp(log_boltzmann_weight(curve, z))
    return float(w) if np.ndim(w) == 0 else w


# ---------------------------------------------------------------------------
# h recursion on a grid


def tilt_theta(x: float, y: float, T: int) -> float:
    """theta' whose walk has mean increment (y - x)/(T - 1)."""
    return inverse_digamma(-(y - x) / (T - 1))


def default_grid(x: float, y: float, z, T: int, theta: float, n_points: int = N_NODES) -> Grid:
    """[min - 12 sigma sqrt(T), max + 12 sigma sqrt(T)] over x, y and the relevant z."""
    pad = WINDOW_SD * math.sqrt(polygamma(1, theta) * T)
    lo0, hi0 = min(x, y), max(x, y)
    z = np.asarray(z, dtype=float)
    zf = z[np.isfinite(z)]
    zf = zf[zf > lo0 - pad]
    if zf.size:
        lo0, hi0 = min(lo0, zf.min()), max(hi0, zf.max())
    return Grid(lo0 - pad, hi0 + pad, n_points)


class _Convolver:
    """Trapezoid convolution with G_theta on a fixed grid, by FFT."""

    def __init__(self, grid: Grid, theta: float):
        n = grid.n_points
        self.n = n
        self.step = grid.step
        self.size = 1 << int(math.ceil(math.log2(3 * n)))
        d = np.arange(-(n - 1), n) * grid.step
        ker = np.exp(log_G(theta, d))
        self.ker_hat = np.fft.rfft(ker, self.size)

    def __call__(self, vals: np.ndarray) -> np.ndarray:
        full = np.fft.irfft(np.fft.rfft(vals, self.size) * self.ker_hat, self.size)
        return full[self.n - 1 : 2 * self.n - 1] * self.step


@numba.njit(cache=True)
def _log_conv_direct(lh, kl, log_step):
    """log of step * sum_j exp(lh[j] + kl[i - j + n - 1]) without any floor."""
    n = lh.size
    out = np.empty(n)
    for i in range(n):
        top = -np.inf
        for j in range(n):
            if lh[j] > -np.inf:
                v = lh[j] + kl[i - j + n - 1]
                if v > top:
                    top = v
        if top == -np.inf:
            out[i] = -np.inf
            continue
        acc = 0.0
        for j in range(n):
            if lh[j] > -np.inf:
                v = lh[j] + kl[i - j + n - 1] - top
                if v > -745.0:
                    acc += math.exp(v)
        out[i] = top + math.log(acc) + log_step
    return out


def _h_log_tables(c: float, z_eff, n: int, grid: Grid, theta: float, exact: bool = False) -> list:
    """[log h_1, ..., log h_n] on the grid; z_eff[i] is the entry met by x_i.

    ``z_eff`` is indexed from 0 with z_eff[0] unused, following the recursion
    h_1(y) = G(y - c) e^{-H(z_2 - y)}, h_m(y) = e^{-H(z_{m+1} - y)} (h_{m-1} * G)(y).
    Values below the FFT noise floor are set to -inf; ``exact`` switches to a
    direct log-space sum (quadratic cost, no floor).
    """
    nodes = grid.nodes
    out = []
    with np.errstate(divide="ignore"):
        lh = log_G(theta, nodes - c) + np.log(_exp_neg_H(z_eff[1] - nodes))
    out.append(lh)
    conv = _Convolver(grid, theta) if n >= 2 and not exact else None
    if exact and n >= 2:
        kl = log_G(theta, np.arange(-(grid.n_points - 1), grid.n_points) * grid.step)
    for m in range(2, n + 1):
        if exact:
            with np.errstate(divide="ignore"):
                lh = _log_conv_direct(lh, kl, math.log(grid.step)) + np.log(_exp_neg_H(z_eff[m] - nodes))
            out.append(lh)
            continue
        top = lh.max()
        if top == -np.inf:
            raise GridError("h vanished on the grid")
        cv = conv(np.exp(lh - top))
        peak = cv.max()
        with np.errstate(divide="ignore"):
            lc = np.where(cv > NOISE_FLOOR * peak, np.log(np.maximum(cv, 1e-300)), -np.inf)
        with np.errstate(divide="ignore"):
            lh = lc + top + np.log(_exp_neg_H(z_eff[m] - nodes))
        out.append(lh)
    return out


def _check_boundary_mass(lf: np.ndarray, what: str) -> None:
    top = lf.max()
    if top == -np.inf:
        raise GridError(f"{what}: density vanished on the grid")
    f = np.exp(lf - top)
    k = max(2, f.size // 100)
    tot = f.sum()
    if (f[:k].sum() + f[-k:].sum()) > BOUNDARY_MASS * tot:
        raise GridError(f"{what}: grid window too small (boundary mass above {BOUNDARY_MASS:g})")


def compute_h_grid(c: float, z, n: int, grid: Grid, theta: float) -> GridDensity:
    """log h_n^{c,z} on the grid.

    ``z`` is a sequence z_1, z_2, ... (Python index 0 holds z_1); only
    z_2..z_{n+1} enter.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    if z.size < n + 1:
        raise DomainError("z needs at least n + 1 entries")
    tables = _h_log_tables(c, z, n, grid, theta)
    _check_boundary_mass(tables[-1], "h")
    return GridDensity(grid, tables[-1])


@dataclass
class CdfTable:
    """CDF of a tabulated density, cubic Hermite between grid nodes.

    Node slopes come from central differences, so the CDF is fourth-order
    accurate in the grid step.
    """

    grid: Grid
    density: np.ndarray  # normalized, at nodes
    cdf: np.ndarray  # at nodes, 0 -> 1
    slope: np.ndarray | None = None

    def __post_init__(self):
        if self.slope is None:
            self.slope = np.gradient(self.density, self.grid.step)

    def _partial(self, i, s):
        # integral of the Hermite cubic over [node i, node i + s*step]
        h = self.grid.step
        f0, f1 = self.density[i], self.density[i + 1]
        d0, d1 = self.slope[i], self.slope[i + 1]
        s2, s3, s4 = s * s, s**3, s**4
        return h * (
            f0 * (s - s3 + s4 / 2)
            + h * d0 * (s2 / 2 - 2 * s3 / 3 + s4 / 4)
            + f1 * (s3 - s4 / 2)
            + h * d1 * (s4 / 4 - s3 / 3)
        )

    def _cell_value(self, i, s):
        val = self.cdf[i] + self._partial(i, s)
        return np.clip(val, self.cdf[i], self.cdf[i + 1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        x = (s - self.grid.lo) / self.grid.step
        i = np.clip(np.floor(x).astype(int), 0, self.grid.n_points - 2)
        val = self._cell_value(i, np.clip(x - i, 0.0, 1.0))
        val = np.where(x < 0, 0.0, np.where(x > self.grid.n_points - 1, 1.0, val))
        return float(val) if val.ndim == 0 else val

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        flat = np.atleast_1d(u).ravel()
        i = np.clip(np.searchsorted(self.cdf, flat, side="right") - 1, 0, self.grid.n_points - 2)
        a, b = np.zeros(flat.size), np.ones(flat.size)
        for _ in range(60):
            m = 0.5 * (a + b)
            below = self._cell_value(i, m) < flat
            a = np.where(below, m, a)
            b = np.where(below, b, m)
        out = self.grid.lo + (i + 0.5 * (a + b)) * self.grid.step
        return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)


def _hermite_cdf(f: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = np.gradient(f, step)
    cells = step * (0.5 * (f[1:] + f[:-1]) + step * (d[:-1] - d[1:]) / 12)
    cdf = np.maximum.accumulate(np.concatenate([[0.0], np.cumsum(cells)]))
    tot = cdf[-1]
    if not tot > 0:
        raise GridError("degenerate denominator: total mass is zero")
    return f / tot, cdf / tot, d / tot


@numba.njit(cache=True)
def _invert_cell(lo, step, f0, f1, c0, target):
    rem = target - c0
    a = (f1 - f0) / (2.0 * step)
    disc = f0 * f0 + 4.0 * a * rem
    if disc < 0.0:
        disc = 0.0
    den = f0 + math.sqrt(disc)
    s = 2.0 * rem / den if den > 0 else 0.0
    if s > step:
        s = step
    if s < 0.0:
        s = 0.0
    return lo + s


def conditional_cdf(x: float, y: float, z, k: int, grid: Grid, theta: float) -> CdfTable:
    """CDF of r with density proportional to h_k^{x,z}(r) G(y - r), tabulated on the grid."""
    z = np.asarray(z, dtype=float)
    lh = _h_log_tables(x, z, k, grid, theta)[-1]
    lf = lh + log_G(theta, y - grid.nodes)
    _check_boundary_mass(lf, "conditional density")
    f = np.exp(lf - lf.max())
    dens, cdf, slope = _hermite_cdf(f, grid.step)
    return CdfTable(grid, dens, cdf, slope)


# ---------------------------------------------------------------------------
# grand monotone coupling


@numba.njit(cache=True)
def _site_draw(lo, step, lh, theta, lgt, Y, u):
    """Invert the CDF of h(r) G(Y - r) on the grid.

    Returns nan when the density is still significant at the first or last
    node carrying mass (window too small, or mass in the floored region).
    """
    n = lh.size
    lf = np.empty(n)
    top = -np.inf
    for j in range(n):
        val = lh[j]
        if val > -np.inf:
            v = Y - (lo + j * step)
            val = val - theta * v - math.exp(-v) - lgt if v > -700.0 else -np.inf
        lf[j] = val
        if val > top:
            top = val
    if top == -np.inf:
        return np.nan
    j0 = 0
    while lf[j0] - top < -745.0:
        j0 += 1
    j1 = n - 1
    while lf[j1] - top < -745.0:
        j1 -= 1
    if j1 - j0 < 2:
        return np.nan
    if lf[j0] - top > EDGE_LOG or lf[j1] - top > EDGE_LOG:
        return np.nan
    m = j1 - j0 + 1
    f = np.empty(m)
    for k in range(m):
        f[k] = math.exp(lf[j0 + k] - top)
    cdf = np.empty(m)
    cdf[0] = 0.0
    for k in range(1, m):
        cdf[k] = cdf[k - 1] + 0.5 * (f[k] + f[k - 1]) * step
    target = u * cdf[m - 1]
    i = np.searchsorted(cdf, target, side="right") - 1
    if i < 0:
        i = 0
    if i > m - 2:
        i = m - 2
    return _invert_cell(lo + (j0 + i) * step, step, f[i], f[i + 1], cdf[i], target)


@dataclass
class CouplingTables:
    """Everything the grand coupling needs that depends on (x, z) only."""

    boundary: BoundaryData
    theta: float
    grid: Grid
    log_h: list  # log_h[m-1] = log h_m^{x,z'}, m = 1..T-2
    exact: bool = False


def coupling_tables(
    boundary: BoundaryData,
    theta: float = 1.0,
    grid: Grid | None = None,
    tilt: float | None = None,
    exact: bool = False,
) -> CouplingTables:
    """Precompute h tables. The law does not depend on ``theta``; ``tilt`` overrides the automatic theta'."""
    b = boundary
    th = tilt if tilt is not None else tilt_theta(b.x, b.y, b.T)
    if grid is None:
        grid = default_grid(b.x, b.y, b.z[2:], b.T, th)
    # z'_j = z(j+1): the entry met by x_i = l(i+1) is z(i+2) = z'_{i+1}
    z_eff = b.z[1:]
    tables = _h_log_tables(b.x, z_eff, b.T - 2, grid, th, exact) if b.T > 2 else []
    return CouplingTables(b, th, grid, tables, exact)


def grand_coupling_from_tables(tab: CouplingTables, uniforms) -> np.ndarray:
    """Draws for a batch of uniform vectors; ``uniforms`` has shape (..., T-2)."""
    b = tab.boundary
    u = np.asarray(uniforms, dtype=float)
    if u.shape[-1] != b.T - 2:
        raise DomainError("need T-2 uniforms per draw")
    if np.any(~(u > 0)) or np.any(~(u < 1)):
        raise DomainError("uniforms must lie in (0, 1)")
    flat = u.reshape(-1, b.T - 2)
    out = _gc_batch(
        tab.grid.lo, tab.grid.step, np.array(tab.log_h) if tab.log_h else np.empty((0, 1)),
        tab.theta, math.lgamma(tab.theta), b.x, b.y, flat,
    )
    if np.any(np.isnan(out)):
        if not tab.exact:
            # FFT floor hit: redo with the exact log-space recursion
            exact = coupling_tables(b, tab.theta, tab.grid, tab.theta, exact=True)
            return grand_coupling_from_tables(exact, uniforms)
        raise GridError("grand coupling: conditional density reaches the edge of the usable grid")
    return out.reshape(u.shape[:-1] + (b.T,))


@numba.njit(cache=True)
def _gc_batch(lo, step, log_h, theta, lgt, x, y, us):
    R, k = us.shape
    T = k + 2
    out = np.empty((R, T))
    for r in range(R):
        out[r, 0] = x
        out[r, T - 1] = y
        Y = y
        for s in range(T - 1, 1, -1):  # 1-based site s, 0-based column s-1
            val = _site_draw(lo, step, log_h[s - 2], theta, lgt, Y, us[r, s - 2])
            out[r, s - 1] = val
            Y = val
    return out


def grand_coupling_sample(
    boundary: BoundaryData, uniforms, theta: float = 1.0, grid: Grid | None = None, tilt: float | None = None
) -> np.ndarray:
    """Deterministic map (boundary, u_1..u_{T-2}) -> curve l(1..T).

    u_{s-1} drives site s; sites are filled from T-1 down to 2.
    """
    u = np.asarray(uniforms, dtype=float)
    if boundary.T == 2:
        if u.shape[-1] != 0:
            raise DomainError("T = 2 takes no uniforms")
        return np.array([boundary.x, boundary.y])
    tab = coupling_tables(boundary, theta, grid, tilt)
    return grand_coupling_from_tables(tab, u)


def pair_grid(b1: BoundaryData, b2: BoundaryData) -> tuple[Grid, float]:
    """Common grid and tilt for comparing two boundaries under shared uniforms."""
    th = tilt_theta(0.5 * (b1.x + b2.x), 0.5 * (b1.y + b2.y), b1.T)
    g1 = default_grid(b1.x, b1.y, b1.z[2:], b1.T, th)
    g2 = default_grid(b2.x, b2.y, b2.z[2:], b2.T, th)
    return Grid(min(g1.lo, g2.lo), max(g1.hi, g2.hi), max(g1.n_points, g2.n_points)), th


# ---------------------------------------------------------------------------
# heat bath


def heat_bath_sweep(curves, boundary: BoundaryData, rng: RngStream, random_scan: bool = False) -> np.ndarray:
    """One sweep of single-site updates over sites 2..T-1 for a batch of curves.

    In v = e^{l(m)} the full conditional is GIG(0, chi, psi) with
    chi = 2(e^{l(m-1)} + e^{z(m+1)}) and psi = 2 e^{-l(m+1)}.
    """
    c = np.array(curves, dtype=float, copy=True)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    T = boundary.T
    if c.shape[1] != T:
        raise DomainError("curve length must be T")
    sites = np.arange(2, T)
    if random_scan:
        sites = sites[np.argsort(rng.uniform(sites.size))] if sites.size > 1 else sites
    z = boundary.z
    for m in sites:
        left = c[:, m - 2]
        zt = z[m]  # z(m+1)
        log_chi = LOG2 + (np.logaddexp(left, zt) if np.isfinite(zt) else left)
        log_psi = LOG2 - c[:, m]
        c[:, m - 1] = sample_log_gig0(log_chi, log_psi, rng)
    return c[0] if single else c


# ---------------------------------------------------------------------------
# free bridges


class BridgeTables:
    """m-fold densities of the centred theta' increment on a common fine grid.

    Built from one FFT of the single-step density; powers of its transform give
    every m-fold convolution.
    """

    def __init__(self, theta: float, max_m: int, delta: float = 0.02):
        self.theta = theta
        self.mean = -_digamma(theta)
        self.sd = math.sqrt(polygamma(1, theta))
        self.delta = delta
        width = 2 * WINDOW_SD * self.sd * math.sqrt(max_m) + 80.0 / theta + 40.0
        size = 1 << int(math.ceil(math.log2(width / delta)))
        self.size = size
        idx = np.arange(size)
        c = ((idx + size // 2) % size - size // 2) * delta
        with np.errstate(over="ignore", under="ignore"):
            g1 = np.exp(log_G(theta, c + self.mean))
        self.phi = np.fft.rfft(g1) * delta
        self._cache = {}

    def log_density(self, m: int):
        """(c_start, log values) of the centred m-fold density over its reliable range."""
        if m in self._cache:
            return self._cache[m]
        g = np.fft.irfft(self.phi**m, self.size) / self.delta
        g = np.fft.fftshift(g)
        c0 = -(self.size // 2) * self.delta
        peak = g.max()
        ok = g > 1e-14 * peak
        ipk = int(np.argmax(g))
        i0 = ipk
        while i0 > 0 and ok[i0 - 1]:
            i0 -= 1
        i1 = ipk
        while i1 < self.size - 1 and ok[i1 + 1]:
            i1 += 1
        res = (c0 + i0 * self.delta, np.log(g[i0 : i1 + 1]))
        self._cache[m] = res
        return res


def _digamma(x):
    from .numerics import digamma

    return digamma(x)


@numba.njit(cache=True)
def _interp_log(c0, delta, lv, c):
    t = (c - c0) / delta
    if t < 0.0 or t > lv.size - 1:
        return -np.inf
    i = int(math.floor(t))
    if i >= lv.size - 1:
        return lv[lv.size - 1]
    w = t - i
    return lv[i] * (1.0 - w) + lv[i + 1] * w


@numba.njit(cache=True)
def _bridge_mid(a, b, u, c1, lv1, off1, c2, lv2, off2, delta, stride):
    """Draw r with density g1(r - a - off1) g2(b - r - off2) (centred tables)."""
    base = a + off1 + c1
    lo = max(base, b - off2 - (c2 + (lv2.size - 1) * delta))
    hi = min(base + (lv1.size - 1) * delta, b - off2 - c2)
    if hi - lo < 3 * delta:
        return np.nan
    j0 = int(math.ceil((lo - base) / delta))
    j1 = int(math.floor((hi - base) / delta))
    m = (j1 - j0) // stride + 1
    if m < 3:
        return np.nan
    h = stride * delta
    lf = np.empty(m)
    top = -np.inf
    for k in range(m):
        j = j0 + k * stride
        r = base + j * delta
        val = lv1[j] + _interp_log(c2, delta, lv2, b - off2 - r)
        lf[k] = val
        if val > top:
            top = val
    cdf = np.empty(m)
    f = np.empty(m)
    for k in range(m):
        f[k] = math.exp(lf[k] - top) if lf[k] > -np.inf else 0.0
    cdf[0] = 0.0
    for k in range(1, m):
        cdf[k] = cdf[k - 1] + 0.5 * (f[k] + f[k - 1]) * h
    target = u * cdf[m - 1]
    i = np.searchsorted(cdf, target, side="right") - 1
    if i < 0:
        i = 0
    if i > m - 2:
        i = m - 2
    return _invert_cell(base + (j0 + i * stride) * delta, h, f[i], f[i + 1], cdf[i], target)


def _dyadic_plan(T: int) -> list:
    """Levels of (left, mid, right) 0-based site triples."""
    plan = []
    level = [(0, T - 1)]
    while level:
        trip, nxt = [], []
        for a, b in level:
            if b - a >= 2:
                mid = a + (b - a) // 2
                trip.append((a, mid, b))
                nxt += [(a, mid), (mid, b)]
        if trip:
            plan.append(trip)
        level = nxt
    return plan


def bridge_sample_fast(T: int, x: float, y: float, uniforms, tables: BridgeTables | None = None) -> np.ndarray:
    """Bridge draws by recursive midpoint splitting with cached m-fold densities.

    ``uniforms`` has shape (R, T-2); column j drives the j-th midpoint in the
    fixed dyadic order.
    """
    u = np.atleast_2d(np.asarray(uniforms, dtype=float))
    if u.shape[1] != T - 2:
        raise DomainError("need T-2 uniforms per draw")
    R = u.shape[0]
    out = np.empty((R, T))
    out[:, 0], out[:, -1] = x, y
    if T == 2:
        return out
    th = tilt_theta(x, y, T)
    if tables is None or tables.theta != th:
        tables = BridgeTables(th, T)
    col = 0
    for trip in _dyadic_plan(T):
        for a, mid, b in trip:
            m1, m2 = mid - a, b - mid
            c1, lv1 = tables.log_density(m1)
            c2, lv2 = tables.log_density(m2)
            sd = tables.sd * math.sqrt(m1 * m2 / (m1 + m2))
            stride = max(1, int(sd / (24 * tables.delta)))
            out[:, mid] = _bridge_column(
                out[:, a], out[:, b], u[:, col], c1, lv1, m1 * tables.mean, c2, lv2, m2 * tables.mean,
                tables.delta, stride,
            )
            col += 1
    if np.any(np.isnan(out)):
        raise GridError("bridge: conditional window empty")
    return out


@numba.njit(cache=True)
def _bridge_column(aa, bb, uu, c1, lv1, off1, c2, lv2, off2, delta, stride):
    out = np.empty(aa.size)
    for k in range(aa.size):
        out[k] = _bridge_mid(aa[k], bb[k], uu[k], c1, lv1, off1, c2, lv2, off2, delta, stride)
    return out


def bridge_sample(T: int, x: float, y: float, rng: RngStream, n_samples: int | None = None, method: str = "fast"):
    """Free H^RW bridge from (1, x) to (T, y).

    ``method="grid"`` runs the grand coupling with z = -inf; ``"fast"`` uses
    the cached m-fold densities.
    """
    if T < 2:
        raise DomainError("T must be >= 2")
    R = 1 if n_samples is None else n_samples
    u = rng.uniform((R, T - 2)) if T > 2 else np.empty((R, 0))
    if method == "fast":
        out = bridge_sample_fast(T, x, y, u)
    elif method == "grid":
        out = grand_coupling_sample(BoundaryData(T, x, y), u) if T > 2 else np.tile([x, y], (R, 1))
    else:
        raise DomainError("method must be 'fast' or 'grid'")
    return out[0] if n_samples is None else out


def estimate_normalizer(boundary: BoundaryData, n_samples: int, rng: RngStream, chunk: int = 100_000):
    """Monte Carlo (mean, standard error) of the Boltzmann weight under the free bridge."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    b = boundary
    if not np.any(b.z_active):
        return 1.0, 0.0
    th = tilt_theta(b.x, b.y, b.T)
    tables = BridgeTables(th, b.T) if b.T > 2 else None
    s = s2 = 0.0
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        if b.T > 2:
            paths = bridge_sample_fast(b.T, b.x, b.y, rng.uniform((k, b.T - 2)), tables)
        else:
            paths = np.tile([b.x, b.y], (k, 1))
        w = np.exp(log_boltzmann_weight(paths, b.z))
        s += w.sum()
        s2 += (w * w).sum()
        done += k
    mean = s / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / n_samples)


# ---------------------------------------------------------------------------
# ensembles


def resample_interior(
    ensemble: LineEnsemble, window, rng: RngStream, theta: float = 1.0, bottom_label: int = 2
) -> LineEnsemble:
    """Replace L_1 on (a, b) by a Gibbs draw given L_1(a), L_1(b) and L_2 on [a, b]."""
    a, b = window
    if a < ensemble.index_lo or b > ensemble.index_hi or b <= a:
        raise DomainError("window must lie inside the index range with a < b")
    if 1 not in ensemble.curves or bottom_label not in ensemble.curves:
        raise DomainError("ensemble needs curves 1 and 2")
    out = ensemble.copy()
    if b == a + 1:
        return out
    top = ensemble.segment(1, a, b)
    bd = BoundaryData(b - a + 1, top[0], top[-1], ensemble.segment(bottom_label, a, b))
    new = grand_coupling_sample(bd, rng.uniform(bd.T - 2), theta)
    out.curves[1][a - out.index_lo : b - out.index_lo + 1] = new
    return out
