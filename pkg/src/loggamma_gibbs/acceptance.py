"""The twelve acceptance checks, each runnable at full or reduced size."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .gibbs import BoundaryData, estimate_normalizer, grand_coupling_sample, heat_bath_sweep
from .kpz_constants import kpz_report, sigma_p_squared
from .numerics import RngStream, log_G
from .polymer import brute_force_log_tau_batch, log_partition, log_z_entries_batch, sample_disorder
from .rsk_chain import run_chain_batch
from .verify import (
    TW_MEAN,
    TW_VAR,
    bridge_midpoint_sample,
    build_tw_table,
    count_inversions,
    exponent_fit,
    free_energy_samples,
    gibbs_invariance_check,
    ks_distance,
    modulus_scan,
    monotone_check,
    tw_convergence_scan,
    tw_gue_cdf,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.title} ({self.seconds:.1f}s) {self._short()}"

    def _short(self) -> str:
        parts = []
        for k, v in self.detail.items():
            if isinstance(v, float):
                parts.append(f"{k}={v:.4g}")
            elif isinstance(v, (int, bool, str)):
                parts.append(f"{k}={v}")
        return " ".join(parts)


def _timed(fn):
    def wrap(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrap.__name__ = fn.__name__
    wrap.__doc__ = fn.__doc__
    return wrap


@_timed
def constant_identities(quick: bool = False) -> CriterionResult:
    worst = 0.0
    keys = ("d_cubed", "A_kappa_over_2d2", "h2_kappa2_over_2d", "g_inv_reflection")
    for th in (0.5, 1.0, 2.0):
        for r in (0.5, 1.0, 2.0):
            rep = kpz_report(th, r, legendre=False)
            worst = max(worst, *(rep.residuals[k] for k in keys))
    return CriterionResult(1, "constant identities", worst < 1e-9, {"max_residual": worst})


@_timed
def dp_vs_enumeration(quick: bool = False, seed: int = 2) -> CriterionResult:
    n_dis = 20 if quick else 100
    rng = RngStream(seed)
    worst = 0.0
    for _ in range(n_dis):
        d = sample_disorder(6, 6, 1.0 + rng.uniform(), rng)
        dp = log_partition(d).values
        for N in range(1, 7):
            for n in range(1, 7):
                bf = brute_force_log_tau_batch(d.log_weights[None], N, 1, n)[0]
                worst = max(worst, abs(dp[n - 1, N - 1] - bf) / max(1.0, abs(bf)))
    return CriterionResult(2, "DP equals path enumeration", worst < 1e-12, {"max_rel_err": worst, "disorders": n_dis})


@_timed
def chain_vs_polymer(quick: bool = False, seed: int = 3) -> CriterionResult:
    R = 4000 if quick else 20000
    N, n, theta = 3, 6, 2.0
    rng = RngStream(seed)
    lw = -np.log(rng.standard_gamma(theta, size=(R, n, N)))
    ent = log_z_entries_batch(lw, n)
    stats = {}
    for M in (30.0, 60.0):
        tr = run_chain_batch(N, theta, M, n, R, RngStream(seed, int(M)))
        stats[M] = [ks_distance(tr.log_entry(3, l, n), ent[(3, l)]) for l in (1, 2)]
    thr = 0.03 if not quick else 1.36 * math.sqrt(2.0 / R) * 1.6
    ks = max(stats[30.0])
    drift = max(abs(a - b) for a, b in zip(stats[30.0], stats[60.0]))
    ok = ks < thr and drift < (0.01 if not quick else 0.03)
    return CriterionResult(
        3, "RSK chain vs brute force", ok,
        {"ks_31": stats[30.0][0], "ks_32": stats[30.0][1], "ks_M60_31": stats[60.0][0],
         "ks_M60_32": stats[60.0][1], "max_change": drift, "replicas": R},
    )


@_timed
def gibbs_invariance(quick: bool = False, seed: int = 4) -> CriterionResult:
    R = 2000 if quick else 10000
    thr = 0.02 if not quick else 0.045
    rep = gibbs_invariance_check(4, 1.0, (2, 6), R, RngStream(seed), threshold=thr)
    ctrl = gibbs_invariance_check(4, 1.0, (2, 6), R, RngStream(seed), threshold=thr, control=True)
    return CriterionResult(
        4, "Gibbs invariance", rep.passed and ctrl.passed,
        {"ks": rep.statistic, "control_ks": ctrl.statistic, "threshold": thr, "replicas": R},
    )


@_timed
def monotone_coupling(quick: bool = False, seed: int = 5) -> CriterionResult:
    n = 1000 if quick else 10000
    rep = monotone_check(1.0, 8, n, RngStream(seed))
    ctrl = monotone_check(1.0, 8, max(200, n // 10), RngStream(seed, 1), control=True)
    return CriterionResult(
        5, "monotone coupling", rep.passed and ctrl.passed,
        {"violations": int(rep.statistic), "control_violations": int(ctrl.statistic), "pairs": n},
    )


CROSS_BOUNDARY = BoundaryData(6, 0.3, -0.5, np.array([-np.inf, -1.0, 0.2, -0.4, -0.8, -1.5]))


@_timed
def sampler_cross_validation(quick: bool = False, seed: int = 6) -> CriterionResult:
    R = 2000 if quick else 10000
    burn = 200 if quick else 1000
    b = CROSS_BOUNDARY
    gc = grand_coupling_sample(b, RngStream(seed).uniform((R, b.T - 2)))
    hb = np.tile(np.linspace(b.x, b.y, b.T), (R, 1))
    rng = RngStream(seed, 1)
    for _ in range(burn):
        hb = heat_bath_sweep(hb, b, rng)
    ks = [ks_distance(gc[:, j], hb[:, j]) for j in range(1, b.T - 1)]
    # quick mode: two-sample critical value at level ~1e-3
    thr = 0.02 if not quick else 1.95 * math.sqrt(2.0 / R)
    return CriterionResult(
        6, "grand coupling vs heat bath", max(ks) < thr,
        {"ks_max": max(ks), "ks_site3": ks[1], "threshold": thr, "samples": R},
    )


@_timed
def tracy_widom(quick: bool = False, seed: int = 7) -> CriterionResult:
    Ns = [32, 64, 128] if quick else [64, 128, 256, 512]
    R = 500 if quick else 2000
    reps = tw_convergence_scan(2.0, 1.0, Ns, R, seed)
    ks = [r.statistic for r in reps]
    last = reps[-1]
    inv = count_inversions(ks)
    mean_err = abs(last.metadata["mean"] - TW_MEAN)
    if quick:
        ok = inv <= 1 and ks[-1] < 0.2
    else:
        ok = inv <= 1 and ks[-1] < 0.12 and mean_err < 0.25
    detail = {f"ks_N{r.metadata['N']}": r.statistic for r in reps}
    detail.update(mean=last.metadata["mean"], var=last.metadata["var"], inversions=inv)
    return CriterionResult(7, "Tracy-Widom one-point limit", ok, detail)


@_timed
def fluctuation_exponent(quick: bool = False, seed: int = 8) -> CriterionResult:
    Ns = [32, 64, 128, 256] if quick else [64, 128, 256, 512, 1024]
    R = 500 if quick else 2000
    pairs = [(N, float(np.var(free_energy_samples(2.0, 1.0, N, R, seed), ddof=1))) for N in Ns]
    slope, _, r2 = exponent_fit(pairs)
    tol = 0.08 if not quick else 0.15
    return CriterionResult(8, "fluctuation exponent", abs(slope - 2 / 3) < tol, {"slope": slope, "r2": r2})


@_timed
def bridge_midpoint(quick: bool = False, seed: int = 9) -> CriterionResult:
    n = 2000 if quick else 10000
    half = 64 if quick else 256
    mid = bridge_midpoint_sample(2.0, 1.0, half, n, RngStream(seed))
    sd = math.sqrt(sigma_p_squared(2.0, 1.0) / 4.0)
    from scipy.stats import norm

    ks = ks_distance(mid, norm(0.0, sd).cdf)
    thr = 0.03 if not quick else 0.05
    return CriterionResult(9, "bridge midpoint Gaussian", ks < thr, {"ks": ks, "sd": float(mid.std()), "target_sd": sd})


def normalizer_quadrature(x: float, y: float, z3: float, theta: float = 1.0, n: int = 2**14) -> float:
    """Ratio of trapezoid integrals of G(r-x)G(y-r)exp(-e^{z3-r}) and G(r-x)G(y-r)."""
    lo, hi = min(x, y) - 40.0, max(x, y, z3) + 40.0
    r = np.linspace(lo, hi, n)
    base = np.exp(log_G(theta, r - x) + log_G(theta, y - r))
    w = np.exp(-np.exp(np.minimum(z3 - r, 700.0)))
    return float(np.trapezoid(base * w, r) / np.trapezoid(base, r))


@_timed
def normalizer(quick: bool = False, seed: int = 10) -> CriterionResult:
    n = 10**5 if quick else 10**6
    x, y, z3 = 0.5, -0.2, 0.4
    b = BoundaryData(3, x, y, np.array([-np.inf, -np.inf, z3]))
    est, se = estimate_normalizer(b, n, RngStream(seed))
    ref = normalizer_quadrature(x, y, z3)
    rel = abs(est - ref) / ref
    return CriterionResult(10, "normalizer vs quadrature", rel < 0.01, {"estimate": est, "quadrature": ref, "rel_err": rel})


@_timed
def tw_self_check(quick: bool = False) -> CriterionResult:
    table = build_tw_table()
    probes = np.linspace(-8.0, 4.0, 7)
    change = float(np.max(np.abs(tw_gue_cdf(probes, 128) - tw_gue_cdf(probes, 256))))
    ok = abs(table.mean - TW_MEAN) < 1e-3 and abs(table.variance - TW_VAR) < 1e-3 and change < 1e-9
    return CriterionResult(11, "Tracy-Widom table", ok, {"mean": table.mean, "var": table.variance, "doubling_change": change})


@_timed
def tightness_proxy(quick: bool = False, seed: int = 12) -> CriterionResult:
    Ns = [64, 128, 256] if quick else [128, 256, 512]
    R = 100 if quick else 500
    med = modulus_scan(2.0, 1.0, Ns, R, seed)
    arr = np.array([med[N] for N in Ns])
    increasing = bool(np.all(np.diff(arr, axis=1) > 0))
    spread = float(np.max((arr.max(axis=0) - arr.min(axis=0)) / arr.min(axis=0)))
    tol = 0.2 if not quick else 0.35
    detail = {f"w_N{N}": ",".join(f"{v:.3f}" for v in med[N]) for N in Ns}
    detail.update(increasing=increasing, max_rel_spread=spread)
    return CriterionResult(12, "tightness proxy", increasing and spread < tol, detail)


CRITERIA = [
    constant_identities,
    dp_vs_enumeration,
    chain_vs_polymer,
    gibbs_invariance,
    monotone_coupling,
    sampler_cross_validation,
    tracy_widom,
    fluctuation_exponent,
    bridge_midpoint,
    normalizer,
    tw_self_check,
    tightness_proxy,
]


def run_all(quick: bool = False, echo=print) -> list:
    out = []
    for fn in CRITERIA:
        res = fn(quick=quick)
        if echo:
            echo(res.line())
        out.append(res)
    return out
