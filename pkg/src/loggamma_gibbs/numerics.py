"""Special functions, grids and random variates shared across the package.

Digamma and its derivatives are evaluated by lifting the argument with the
recurrence Psi(x + 1) = Psi(x) + 1/x until x >= 10 and then using the
asymptotic Bernoulli expansion.  Everything accepts scalars or arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209

# B_{2k} for k = 1..8
_BERNOULLI = np.array(
    [1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510]
)
_LIFT = 10.0


class DomainError(ValueError):
    """Argument outside the domain of a special function or sampler."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to meet its tolerance."""


# ---------------------------------------------------------------------------
# random streams


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by a Philox generator whose 128-bit key is the pair, so two streams
    with the same pair replay bit-exactly and distinct ``stream_id`` values
    give independent streams.  ``counter`` counts variates handed out.
    """

    seed: int
    stream_id: int = 0
    counter: int = field(default=0, init=False)
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise DomainError("seed and stream_id must be 64-bit unsigned")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.counter = 0

    def spawn(self, stream_id: int) -> "RngStream":
        """Independent child stream sharing this seed."""
        return RngStream(self.seed, stream_id)

    def _count(self, size) -> None:
        self.counter += 1 if size is None else int(np.prod(size))

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1)."""
        self._count(size)
        u = self._gen.random(size)
        # Generator.random is [0, 1); map the measure-zero 0 inside
        return np.where(u > 0.0, u, 2.0**-54) if size is not None else (u or 2.0**-54)

    def standard_gamma(self, shape, size=None):
        self._count(size)
        return self._gen.standard_gamma(shape, size)

    def standard_normal(self, size=None):
        self._count(size)
        return self._gen.standard_normal(size)


# ---------------------------------------------------------------------------
# polygamma family


def _as_positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)) or np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} must be finite and > 0")
    return arr


def _lift(x):
    """Return (shifted argument, list of pre-shift arguments) for recurrence."""
    x = x.copy()
    shifts = []
    while True:
        mask = x < _LIFT
        if not mask.any():
            return x, shifts
        shifts.append((mask, x.copy()))
        x = np.where(mask, x + 1.0, x)


def _out(val, x):
    return float(val) if np.ndim(x) == 0 else val


_B = [float(b) for b in _BERNOULLI]


def _scalar_polygamma(m: int, x: float) -> float:
    # same algorithm as the array path, without numpy overhead
    if not (x > 0 and math.isfinite(x)):
        raise DomainError("x must be finite and > 0")
    acc = 0.0
    while x < _LIFT:
        acc += (-1.0 / x, 1.0 / x**2, -2.0 / x**3)[m]
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    if m == 0:
        for k in range(len(_B), 0, -1):
            series = series * inv2 + _B[k - 1] / (2 * k)
        return math.log(x) - 0.5 * inv - series * inv2 + acc
    if m == 1:
        for k in range(len(_B), 0, -1):
            series = series * inv2 + _B[k - 1]
        return inv + 0.5 * inv2 + series * inv2 * inv + acc
    for k in range(len(_B), 0, -1):
        series = series * inv2 + (2 * k + 1) * _B[k - 1]
    return -inv2 - inv2 * inv - series * inv2 * inv2 + acc


def digamma(x):
    """Psi(x) = Gamma'(x)/Gamma(x) for x > 0."""
    if isinstance(x, (float, int)):
        return _scalar_polygamma(0, float(x))
    x0 = _as_positive(x)
    y, shifts = _lift(np.atleast_1d(x0))
    acc = np.zeros_like(y)
    for mask, prev in shifts:
        acc -= np.where(mask, 1.0 / prev, 0.0)
    inv2 = 1.0 / (y * y)
    series = np.zeros_like(y)
    for k in range(len(_BERNOULLI), 0, -1):
        series = series * inv2 + _BERNOULLI[k - 1] / (2 * k)
    res = np.log(y) - 0.5 / y - series * inv2 + acc
    return _out(res.reshape(x0.shape), x)


def polygamma(m: int, x):
    """Psi^(m)(x) for m in {1, 2}."""
    if m not in (1, 2):
        raise DomainError("polygamma order must be 1 or 2")
    if isinstance(x, (float, int)):
        return _scalar_polygamma(m, float(x))
    x0 = _as_positive(x)
    y, shifts = _lift(np.atleast_1d(x0))
    acc = np.zeros_like(y)
    for mask, prev in shifts:
        if m == 1:
            acc += np.where(mask, 1.0 / prev**2, 0.0)
        else:
            acc -= np.where(mask, 2.0 / prev**3, 0.0)
    inv = 1.0 / y
    inv2 = inv * inv
    series = np.zeros_like(y)
    if m == 1:
        # 1/x + 1/(2x^2) + sum B_2k / x^(2k+1)
        for k in range(len(_BERNOULLI), 0, -1):
            series = series * inv2 + _BERNOULLI[k - 1]
        res = inv + 0.5 * inv2 + series * inv2 * inv + acc
    else:
        # -1/x^2 - 1/x^3 - sum (2k+1) B_2k / x^(2k+2)
        for k in range(len(_BERNOULLI), 0, -1):
            series = series * inv2 + (2 * k + 1) * _BERNOULLI[k - 1]
        res = -inv2 - inv2 * inv - series * inv2 * inv2 + acc
    return _out(res.reshape(x0.shape), x)


def trigamma(x):
    return polygamma(1, x)


def g_theta(theta: float, z):
    """Psi'(theta - z) / Psi'(z), strictly increasing from (0, theta) onto (0, inf)."""
    if not theta > 0:
        raise DomainError("theta must be > 0")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)) or np.any(~(z < theta)):
        raise DomainError("z must lie strictly inside (0, theta)")
    return polygamma(1, theta - z) / polygamma(1, z)


def g_theta_prime(theta: float, z):
    """Derivative of g_theta in z."""
    a = polygamma(1, z)
    b = polygamma(1, theta - z)
    return (-polygamma(2, theta - z) * a - b * polygamma(2, z)) / a**2


def _scalar_g_inv(theta, r, rtol, max_iter):
    if not (r > 0 and math.isfinite(r)):
        raise DomainError("r must be finite and > 0")

    def log_g(z):
        return math.log(_scalar_polygamma(1, theta - z) / _scalar_polygamma(1, z))

    target = math.log(r)
    lo, hi = 1e-9 * theta, theta - 1e-9 * theta
    if log_g(lo) > target or log_g(hi) < target:
        raise ConvergenceError("r outside the bisection bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if log_g(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * min(mid, theta - mid):
            return 0.5 * (lo + hi)
    raise ConvergenceError("bisection did not converge")


def g_theta_inv(theta: float, r, rtol: float = 1e-13, max_iter: int = 200):
    """Inverse of :func:`g_theta` by bisection on log g, vectorized over ``r``."""
    if not theta > 0:
        raise DomainError("theta must be > 0")
    if isinstance(r, (float, int)):
        return _scalar_g_inv(theta, float(r), rtol, max_iter)
    r0 = np.asarray(r, dtype=float)
    if np.any(~(r0 > 0)) or np.any(~np.isfinite(r0)):
        raise DomainError("r must be finite and > 0")
    target = np.log(np.atleast_1d(r0))
    eps = 1e-9 * theta
    lo = np.full(target.shape, eps)
    hi = np.full(target.shape, theta - eps)
    if np.any(np.log(g_theta(theta, lo)) > target) or np.any(
        np.log(g_theta(theta, hi)) < target
    ):
        raise ConvergenceError("r outside the bisection bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        up = np.log(g_theta(theta, mid)) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= rtol * np.minimum(mid, theta - mid)):
            break
    else:
        raise ConvergenceError("bisection did not converge")
    res = 0.5 * (lo + hi)
    return float(res[0]) if r0.ndim == 0 else res.reshape(r0.shape)


def inverse_digamma(y: float, tol: float = 1e-14) -> float:
    """Solve Psi(x) = y for x > 0 (Newton from the standard starting point)."""
    x = math.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + EULER_GAMMA)
    for _ in range(100):
        step = (digamma(x) - y) / polygamma(1, x)
        x_new = x - step
        if x_new <= 0:
            x_new = x / 2
        if abs(x_new - x) <= tol * x_new:
            return x_new
        x = x_new
    raise ConvergenceError("inverse digamma did not converge")


# ---------------------------------------------------------------------------
# log-gamma walk increment


def log_G(theta: float, x):
    """log of the increment density exp(-(theta x + e^{-x} + log Gamma(theta)))."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return -theta * x - np.exp(-np.clip(x, -700.0, None)) - math.lgamma(theta)


def G(theta: float, x):
    return np.exp(log_G(theta, x))


def H_interaction(x):
    """H(x) = e^x with H(-inf) = 0."""
    with np.errstate(over="ignore"):
        return np.exp(x)


# ---------------------------------------------------------------------------
# grids


@dataclass
class Grid:
    """Uniform grid ``lo = u_0 < ... < u_{n-1} = hi``."""

    lo: float
    hi: float
    n_points: int = 4096

    def __post_init__(self):
        if not (self.lo < self.hi) or self.n_points < 2:
            raise DomainError("grid needs lo < hi and at least two nodes")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)


@dataclass
class GridDensity:
    """Log-density values on a :class:`Grid`; ``-inf`` marks log-zero."""

    grid: Grid
    log_values: np.ndarray

    def __post_init__(self):
        self.log_values = np.asarray(self.log_values, dtype=float)
        if self.log_values.shape != (self.grid.n_points,):
            raise DomainError("one log-value per grid node required")
        if np.any(np.isnan(self.log_values)) or np.any(self.log_values == np.inf):
            raise DomainError("log-values must be finite or -inf")

    def mass(self) -> float:
        """Trapezoid integral of exp(log_values)."""
        lv = self.log_values
        top = lv.max()
        if top == -np.inf:
            return 0.0
        return float(np.trapezoid(np.exp(lv - top), dx=self.grid.step) * math.exp(top))


# ---------------------------------------------------------------------------
# samplers


def sample_gamma(shape: float, rng: RngStream, size=None):
    """Gamma(shape, 1) variates (Marsaglia-Tsang squeeze with the shape<1 boost)."""
    if not np.all(np.asarray(shape) > 0):
        raise DomainError("shape must be > 0")
    return rng.standard_gamma(shape, size)


def sample_inverse_gamma(theta: float, rng: RngStream, size=None):
    return 1.0 / sample_gamma(theta, rng, size)


def _cosh_rejection(omega: np.ndarray, rng: RngStream) -> np.ndarray:
    """Draw s with density proportional to exp(-omega (cosh s - 1)).

    Flat centre with exponential tails in log-coordinates; the acceptance rate
    stays bounded away from zero for every omega > 0.
    """
    omega = np.asarray(omega, dtype=float)
    out = np.empty(omega.shape)
    todo = np.arange(omega.size)
    om_flat = omega.ravel()
    res = out.ravel()

    def psi(x, a):
        return -a * (np.cosh(x) - 1.0)

    def dpsi(x, a):
        return -a * np.sinh(x)

    while todo.size:
        a = om_flat[todo]
        p1 = -psi(1.0, a)
        with np.errstate(divide="ignore"):
            t = np.where(
                p1 > 2.0,
                np.sqrt(2.0 / a),
                np.where(p1 < 0.5, np.log(4.0 / a), 1.0),
            )
        # symmetric density: left and right constructions coincide
        eta = -psi(t, a)
        zeta = -dpsi(t, a)
        r = 1.0 / zeta
        tp = t - r * eta
        q = 2.0 * tp
        u = rng.uniform(todo.size)
        v = rng.uniform(todo.size)
        w = rng.uniform(todo.size)
        tot = 2.0 * r + q
        x = np.where(
            u < q / tot,
            -tp + q * v,
            np.where(u < (q + r) / tot, tp - r * np.log(v), -tp + r * np.log(v)),
        )
        ax = np.abs(x)
        with np.errstate(over="ignore"):
            log_env = np.where(ax > tp, -eta - zeta * (ax - t), 0.0)
            log_f = psi(x, a)
        ok = np.log(w) + log_env <= log_f
        res[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def sample_log_gig0(log_chi, log_psi, rng: RngStream):
    """log of a GIG(0, chi, psi) variate, parameters given as logs.

    Density of v is proportional to v^{-1} exp(-(chi/v + psi v)/2), so
    log v = (log chi - log psi)/2 + s with s ~ exp(-omega cosh s),
    omega = sqrt(chi psi).
    """
    log_chi = np.asarray(log_chi, dtype=float)
    log_psi = np.asarray(log_psi, dtype=float)
    if np.any(np.isnan(log_chi)) or np.any(np.isnan(log_psi)):
        raise DomainError("GIG parameters must be > 0")
    if np.any(np.isinf(log_chi)) or np.any(np.isinf(log_psi)):
        raise DomainError("GIG parameters must be finite and > 0")
    log_chi, log_psi = np.broadcast_arrays(log_chi, log_psi)
    omega = np.exp(0.5 * (log_chi + log_psi))
    s = _cosh_rejection(omega, rng)
    res = 0.5 * (log_chi - log_psi) + s
    return float(res) if res.ndim == 0 else res


def sample_gig0(chi, psi, rng: RngStream):
    """GIG variate of order 0 with density proportional to v^{-1} e^{-(chi/v + psi v)/2}."""
    chi = np.asarray(chi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(~(chi > 0)) or np.any(~(psi > 0)):
        raise DomainError("chi and psi must be > 0")
    return np.exp(sample_log_gig0(np.log(chi), np.log(psi), rng))


# ---------------------------------------------------------------------------
# Hamiltonian checks


@dataclass
class HamiltonianReport:
    theta: float
    density_mass_residual: float
    convexity_violation: float
    log_mgf_max_error: float
    t_grid: np.ndarray
    log_mgf_numeric: np.ndarray

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "density_mass_residual": self.density_mass_residual,
            "convexity_violation": self.convexity_violation,
            "log_mgf_max_error": self.log_mgf_max_error,
        }


def validate_hamiltonians(theta: float, n_t: int = 41) -> HamiltonianReport:
    """Numerical sanity checks of the log-gamma walk and interaction Hamiltonians."""
    from scipy.integrate import quad

    if not theta > 0:
        raise DomainError("theta must be > 0")

    def integrate(f):
        # the increment lives on roughly [-5, 60/theta]
        pieces = [-40.0, -5.0, 0.0, 5.0, 40.0 / min(theta, 1.0) + 40.0, np.inf]
        return sum(quad(f, a, b, limit=200, epsabs=0, epsrel=1e-13)[0] for a, b in zip(pieces, pieces[1:]))

    mass = integrate(lambda x: float(G(theta, x)))

    xs = np.linspace(-20.0, 20.0, 4001)
    h_rw = theta * xs + np.exp(-xs) + math.lgamma(theta)
    h_int = np.exp(xs)
    second = lambda f: f[2:] - 2 * f[1:-1] + f[:-2]
    # relative to the scale of f so that large exponentials do not swamp rounding
    viol = max(
        float(np.max(np.maximum(-second(h_rw) / (1 + np.abs(h_rw[1:-1])), 0.0))),
        float(np.max(np.maximum(-second(h_int) / (1 + np.abs(h_int[1:-1])), 0.0))),
    )

    t_grid = np.linspace(-2.0, theta - 0.05, n_t)
    numeric = np.empty(n_t)
    for i, t in enumerate(t_grid):
        # e^{tx} G_theta(x) = G_{theta - t}(x) Gamma(theta - t) / Gamma(theta)
        numeric[i] = math.log(integrate(lambda x: float(np.exp(t * x + log_G(theta, x)))))
    exact = np.array([math.lgamma(theta - t) - math.lgamma(theta) for t in t_grid])
    return HamiltonianReport(
        theta=theta,
        density_mass_residual=abs(mass - 1.0),
        convexity_violation=viol,
        log_mgf_max_error=float(np.max(np.abs(numeric - exact))),
        t_grid=t_grid,
        log_mgf_numeric=numeric,
    )
