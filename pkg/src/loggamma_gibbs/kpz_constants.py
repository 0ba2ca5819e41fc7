"""KPZ scaling constants of the log-gamma polymer.

With alpha = g_theta^{-1}(r) the law of large numbers, its derivatives and the
fluctuation/transversal scales are

    h(r)   = r Psi(alpha) + Psi(theta - alpha)
    h'(r)  = Psi(alpha)
    h''(r) = Psi'(alpha) / g_theta'(alpha)
    A(r)   = Psi'(alpha)
    d(r)^3 = sum_n r/(n+alpha)^3 + sum_n 1/(n+theta-alpha)^3
    kappa  = (2 A / h''^2)^{1/3}

``kpz_report`` evaluates all of them and attaches the residuals of the
identities tying them together.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import (
    ConvergenceError,
    DomainError,
    digamma,
    g_theta,
    g_theta_inv,
    g_theta_prime,
    polygamma,
)

SERIES_TERMS = 10**6


def _check(theta, x, name="x"):
    if not theta > 0:
        raise DomainError("theta must be > 0")
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"{name} must be finite and > 0")


def h_theta(theta: float, x: float) -> float:
    _check(theta, x)
    a = g_theta_inv(theta, x)
    return x * digamma(a) + digamma(theta - a)


def h_theta_derivs(theta: float, x: float) -> tuple[float, float]:
    """(h', h'') at x; h'' via the chain rule through g_theta'."""
    _check(theta, x)
    a = g_theta_inv(theta, x)
    return digamma(a), polygamma(1, a) / g_theta_prime(theta, a)


def _cubic_tail_sum(a: float, n_terms: int = SERIES_TERMS) -> float:
    """sum_{n>=0} (n + a)^{-3}: direct head plus Euler-Maclaurin tail."""
    head = np.sum(1.0 / (np.arange(n_terms, dtype=float) + a) ** 3)
    m = n_terms + a
    tail = 0.5 / m**2 + 0.5 / m**3 + 0.25 / m**4
    return float(head + tail)


def d_theta_series(theta: float, r: float, n_terms: int = SERIES_TERMS) -> float:
    """Fluctuation scale d_theta(r) from its defining pair of series."""
    _check(theta, r, "r")
    a = g_theta_inv(theta, r)
    return (r * _cubic_tail_sum(a, n_terms) + _cubic_tail_sum(theta - a, n_terms)) ** (1 / 3)


def d_theta(theta: float, r: float) -> float:
    """Same quantity through Psi'' (the series are -Psi''/2)."""
    _check(theta, r, "r")
    a = g_theta_inv(theta, r)
    return (-(r * polygamma(2, a) + polygamma(2, theta - a)) / 2.0) ** (1 / 3)


def kappa_theta(theta: float, r: float) -> float:
    _, h2 = h_theta_derivs(theta, r)
    a = g_theta_inv(theta, r)
    return (2.0 * polygamma(1, a) / h2**2) ** (1 / 3)


def sigma_p_squared(theta: float, r: float) -> float:
    """Variance of the tilted walk increment with mean p = -h'(r); equals Psi'(alpha)."""
    _check(theta, r, "r")
    return polygamma(1, g_theta_inv(theta, r))


def sigma_p_squared_cumulant(theta: float, r: float) -> float:
    """Long route: solve Lambda'(t) = p for Lambda(t) = log Gamma(theta-t) - log Gamma(theta).

    Works in mpmath throughout so it shares nothing with the digamma code used
    by :func:`sigma_p_squared`.
    """
    import mpmath as mp

    _check(theta, r, "r")
    p = -h_theta_derivs(theta, r)[0]
    with mp.workdps(30):
        th = mp.mpf(theta)

        # Lambda'(t) = -psi(theta - t), Lambda''(t) = psi_1(theta - t)
        def dlam(t):
            return -mp.digamma(th - t)

        # Lambda' runs from -inf (t -> -inf) to +inf (t -> theta), increasing
        lo, hi = mp.mpf(-1), th - mp.mpf("1e-6")
        while dlam(lo) > p:
            lo = 2 * lo - 1
        try:
            t_star = mp.findroot(lambda t: dlam(t) - p, (lo, hi), solver="anderson", tol=mp.mpf("1e-25"))
        except (ValueError, ZeroDivisionError) as exc:  # pragma: no cover
            raise ConvergenceError(f"cumulant root-find failed: {exc}") from exc
        return float(mp.psi(1, th - t_star))


def legendre_value(theta: float, r: float) -> float:
    """inf over alpha of -(r Psi(alpha) + Psi(theta - alpha)) by bounded scalar search."""
    from scipy.optimize import minimize_scalar

    _check(theta, r, "r")
    a0 = g_theta_inv(theta, r)

    def neg(a):
        return -(r * digamma(a) + digamma(theta - a))

    # bracket around the stationary point without using it as the answer
    lo, hi = a0 * 0.5, a0 + 0.5 * (theta - a0)
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(neg(res.x))


@dataclass
class KpzConstants:
    theta: float
    r: float
    alpha_star: float
    h: float
    h_prime: float
    h_second: float
    A: float
    lam: float
    d: float
    kappa: float
    sigma_p2: float
    rho: float
    j: float
    residuals: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def max_residual(self) -> float:
        return max(self.residuals.values())


def kpz_report(theta: float, r: float, *, legendre: bool = True) -> KpzConstants:
    _check(theta, r, "r")
    a = g_theta_inv(theta, r)
    h1, h2 = h_theta_derivs(theta, r)
    A = polygamma(1, a)
    d = d_theta_series(theta, r)
    kappa = (2.0 * A / h2**2) ** (1 / 3)
    s_long = sigma_p_squared_cumulant(theta, r)
    res = {
        "alpha_solves_g": abs(g_theta(theta, a) - r) / max(1.0, r),
        "d_cubed": abs(d**3 - A**2 / (2.0 * h2)) / d**3,
        "A_kappa_over_2d2": abs(A * kappa / (2.0 * d**2) - 1.0),
        "h2_kappa2_over_2d": abs(h2 * kappa**2 / (2.0 * d) - 1.0),
        "g_inv_reflection": abs(g_theta_inv(theta, 1.0 / r) + a - theta) / theta,
        "sigma_two_routes": abs(s_long - A) / A,
    }
    h = r * digamma(a) + digamma(theta - a)
    if legendre:
        res["legendre"] = abs(legendre_value(theta, r) + h) / max(1.0, abs(h))
    return KpzConstants(
        theta=theta,
        r=r,
        alpha_star=a,
        h=h,
        h_prime=h1,
        h_second=h2,
        A=A,
        lam=1.0 / h2,
        d=d,
        kappa=kappa,
        sigma_p2=A,
        rho=-digamma(a),
        j=-digamma(theta - a),
        residuals=res,
    )
