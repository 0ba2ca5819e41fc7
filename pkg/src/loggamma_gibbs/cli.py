"""Command-line driver.

Every subcommand writes its artifacts and a JSON manifest into the output
directory (``--out``, else $LOGGAMMA_GIBBS_OUT, else ./runs).  Exit codes:
0 success, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

OUT_ENV = "LOGGAMMA_GIBBS_OUT"
POLYMER_HEADER = ["seed", "theta", "N", "n", "logZ", "F"]
SCAN_HEADER = ["N", "ks", "mean", "var", "replicas", "seed"]


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    theta: float = 2.0
    r: float = 1.0
    seed: int = 7
    n_replicas: int = 2000
    N_list: list = field(default_factory=lambda: [64, 128, 256, 512])
    output_dir: str = ""
    formats: list = field(default_factory=lambda: ["csv", "json"])

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError("theta must be a positive finite number")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError("r must be a positive finite number")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be >= 1")
        if not self.N_list or any(n < 1 for n in self.N_list):
            raise ValueError("N_list must hold positive integers")
        bad = set(self.formats) - {"csv", "json", "svg"}
        if bad:
            raise ValueError(f"unknown formats: {sorted(bad)}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kinds = {f.name: f for f in fields(cls)}
        vals = {}
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {no}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ValueError(f"line {no}: unknown key {key!r}")
            vals[key] = _parse_value(key, val)
        return cls(**vals)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def _parse_value(key: str, val: str):
    if key in ("theta", "r"):
        return float(val)
    if key in ("seed", "n_replicas"):
        return int(val)
    if key == "N_list":
        return [int(x) for x in val.split(",") if x.strip()]
    if key == "formats":
        return [x.strip() for x in val.split(",") if x.strip()]
    return val


def output_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir or os.environ.get(OUT_ENV) or "runs")
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(path: Path, command: str, argv, cfg: RunConfig, reports, extra=None) -> None:
    data = {
        "command": command,
        "argv": list(argv),
        "config": asdict(cfg),
        "seed": cfg.seed,
        "version": _version(),
        "reports": [json.loads(r.to_json()) if hasattr(r, "to_json") else r for r in reports],
    }
    if extra:
        data.update(extra)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------------------
# SVG


def emit_plot(series: dict, path, width: int = 480, height: int = 320, title: str = "") -> None:
    """Small line chart; identical input gives identical bytes."""
    if not series or any(len(xy[0]) == 0 for xy in series.values()):
        raise ValueError("need at least one nonempty series")
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    ml, mr, mt, mb = 50, 110, 25, 35
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n')
    out.write(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>\n')
    if title:
        out.write(f'<text x="{ml}" y="16" font-size="12">{_esc(title)}</text>\n')
    out.write(f'<text x="{ml}" y="{height - 8}" font-size="10">{x0:.4g}</text>\n')
    out.write(f'<text x="{ml + pw}" y="{height - 8}" font-size="10" text-anchor="end">{x1:.4g}</text>\n')
    out.write(f'<text x="{ml - 4}" y="{mt + ph}" font-size="10" text-anchor="end">{y0:.4g}</text>\n')
    out.write(f'<text x="{ml - 4}" y="{mt + 10}" font-size="10" text-anchor="end">{y1:.4g}</text>\n')
    for k, (name, (sx, sy)) in enumerate(series.items()):
        c = colors[k % len(colors)]
        pts = " ".join(f"{px(float(a)):.2f},{py(float(b)):.2f}" for a, b in zip(sx, sy))
        if len(sx) > 1:
            out.write(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>\n')
        for a, b in zip(sx, sy):
            out.write(f'<circle cx="{px(float(a)):.2f}" cy="{py(float(b)):.2f}" r="2.5" fill="{c}"/>\n')
        ly = mt + 14 + 16 * k
        out.write(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 24}" y2="{ly - 4}" stroke="{c}" stroke-width="2"/>\n')
        out.write(f'<text x="{ml + pw + 28}" y="{ly}" font-size="11">{_esc(str(name))}</text>\n')
    out.write("</svg>\n")
    Path(path).write_bytes(out.getvalue().encode("utf-8"))


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------------------
# subcommands


class UsageError(Exception):
    pass


def _int_list(s: str) -> list:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name in ("theta", "r", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "replicas", None) is not None:
        cfg.n_replicas = args.replicas
    if getattr(args, "N", None) is not None:
        cfg.N_list = args.N
    if args.out:
        cfg.output_dir = args.out
    if args.formats:
        cfg.formats = args.formats.split(",")
    cfg.validate()
    return cfg


def _emit_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_plain))


def cmd_kpz_constants(args, argv):
    from .kpz_constants import kpz_report

    cfg = _config(args)
    rep = kpz_report(cfg.theta, cfg.r)
    _emit_json(rep.as_dict())
    d = output_dir(cfg)
    write_manifest(d / "kpz-constants.manifest.json", "kpz-constants", argv, cfg, [], {"result": rep.as_dict()})
    return 0 if rep.max_residual() < 1e-9 else 1


def cmd_sample_polymer(args, argv):
    from .polymer import log_partition_replicas, rescaled_free_energy

    cfg = _config(args)
    Ns = cfg.N_list
    rows = []
    for N in Ns:
        n = args.n if args.n is not None else math.floor(cfg.r * N)
        lz = log_partition_replicas(n, N, cfg.theta, cfg.n_replicas, cfg.seed, tag=N)[:, n - 1]
        F = rescaled_free_energy(lz, n, N, cfg.theta)
        rows += [(cfg.seed, cfg.theta, N, n, a, b) for a, b in zip(lz, F)]
    d = output_dir(cfg)
    write_csv(d / "polymer.csv", POLYMER_HEADER, rows)
    write_manifest(d / "sample-polymer.manifest.json", "sample-polymer", argv, cfg, [])
    print(f"wrote {len(rows)} rows to {d / 'polymer.csv'}")
    return 0


def cmd_sample_chain(args, argv):
    from .numerics import RngStream
    from .rsk_chain import run_chain_batch

    cfg = _config(args)
    tr = run_chain_batch(args.levels, cfg.theta, args.M, args.steps, 1, RngStream(cfg.seed))
    rows = []
    for n in range(tr.n_steps + 1):
        for k in range(1, tr.N + 1):
            for l in range(1, k + 1):
                rows.append((n, k, l, tr.log_entry(k, l, n)[0]))
    d = output_dir(cfg)
    write_csv(d / "chain.csv", ["step", "k", "l", "log_z"], rows)
    write_manifest(d / "sample-chain.manifest.json", "sample-chain", argv, cfg, [], {"M": args.M, "levels": args.levels})
    print(f"wrote {len(rows)} rows to {d / 'chain.csv'}")
    return 0


def cmd_gibbs_resample(args, argv):
    from .gibbs import BoundaryData, grand_coupling_sample
    from .numerics import RngStream

    cfg = _config(args)
    try:
        bd = BoundaryData.from_dict(json.loads(Path(args.boundary).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read boundary JSON: {exc}") from exc
    u = RngStream(cfg.seed).uniform((args.samples, max(bd.T - 2, 0)))
    curves = grand_coupling_sample(bd, u, cfg.theta) if bd.T > 2 else np.tile([bd.x, bd.y], (args.samples, 1))
    curves = np.atleast_2d(curves)
    d = output_dir(cfg)
    if "csv" in cfg.formats:
        write_csv(d / "curves.csv", ["sample", "site", "value"],
                  [(i, s + 1, curves[i, s]) for i in range(curves.shape[0]) for s in range(bd.T)])
    if "json" in cfg.formats:
        (d / "curves.json").write_text(json.dumps({"boundary": bd.to_dict(), "curves": curves.tolist()}) + "\n")
    write_manifest(d / "gibbs-resample.manifest.json", "gibbs-resample", argv, cfg, [])
    return 0


def _report_exit(reports) -> int:
    for r in reports:
        print(r.to_json())
    return 0 if all(r.passed for r in reports) else 1


def cmd_verify_monotone(args, argv):
    from .numerics import RngStream
    from .verify import monotone_check

    cfg = _config(args)
    reps = [
        monotone_check(cfg.theta, args.T, args.trials, RngStream(cfg.seed)),
        monotone_check(cfg.theta, args.T, max(100, args.trials // 10), RngStream(cfg.seed, 1), control=True),
    ]
    write_manifest(output_dir(cfg) / "verify-monotone.manifest.json", "verify-monotone", argv, cfg, reps)
    return _report_exit(reps)


def cmd_verify_gibbs(args, argv):
    from .numerics import RngStream
    from .verify import gibbs_invariance_check

    cfg = _config(args)
    w = tuple(args.window)
    if len(w) != 2:
        raise UsageError("--window needs two integers a,b")
    reps = [
        gibbs_invariance_check(args.levels, cfg.theta, w, cfg.n_replicas, RngStream(cfg.seed), M=args.M),
        gibbs_invariance_check(args.levels, cfg.theta, w, cfg.n_replicas, RngStream(cfg.seed), M=args.M, control=True),
    ]
    write_manifest(output_dir(cfg) / "verify-gibbs.manifest.json", "verify-gibbs", argv, cfg, reps)
    return _report_exit(reps)


def _tw_one(theta, r, N, R, seed):
    from .verify import tw_convergence_scan

    return tw_convergence_scan(theta, r, [N], R, seed)[0]


def _var_one(theta, r, N, R, seed):
    from .verify import free_energy_samples

    lz = free_energy_samples(theta, r, N, R, seed)
    return float(np.var(lz, ddof=1))


def _fan_out(fn, jobs, arg_list):
    """Map in order; results are identical for any number of workers."""
    if jobs <= 1:
        return [fn(*a) for a in arg_list]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *a) for a in arg_list]
        return [f.result() for f in futs]


def cmd_tw_scan(args, argv):
    from .verify import TW_MEAN, count_inversions

    cfg = _config(args)
    if cfg.N_list != sorted(cfg.N_list):
        raise UsageError("--N must be ascending")
    reps = _fan_out(_tw_one, args.jobs, [(cfg.theta, cfg.r, N, cfg.n_replicas, cfg.seed) for N in cfg.N_list])
    d = output_dir(cfg)
    rows = [(r.metadata["N"], r.statistic, r.metadata["mean"], r.metadata["var"], r.n_samples, cfg.seed) for r in reps]
    write_csv(d / "tw-scan.csv", SCAN_HEADER, rows)
    if "svg" in cfg.formats:
        emit_plot({"KS vs F_GUE": (cfg.N_list, [r.statistic for r in reps])}, d / "tw-scan.svg", title="tw-scan")
    ks = [r.statistic for r in reps]
    inv = count_inversions(ks)
    ok = inv <= 1
    if cfg.N_list[-1] >= 512:
        ok = ok and ks[-1] < 0.12 and abs(reps[-1].metadata["mean"] - TW_MEAN) < 0.25
    summary = {"inversions": inv, "pass": ok}
    write_manifest(d / "tw-scan.manifest.json", "tw-scan", argv, cfg, reps, {"summary": summary})
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows([SCAN_HEADER] + [[_fmt(v) for v in row] for row in rows])
    sys.stdout.write(out.getvalue())
    print(("PASS" if ok else "FAIL") + f" tw-scan inversions={inv} ks_last={ks[-1]:.4f}")
    return 0 if ok else 1


def cmd_exponent_scan(args, argv):
    from .verify import exponent_fit

    cfg = _config(args)
    vars_ = _fan_out(_var_one, args.jobs, [(cfg.theta, cfg.r, N, cfg.n_replicas, cfg.seed) for N in cfg.N_list])
    slope, icpt, r2 = exponent_fit(list(zip(cfg.N_list, vars_)))
    d = output_dir(cfg)
    write_csv(d / "exponent-scan.csv", ["N", "var_logZ", "replicas", "seed"],
              [(N, v, cfg.n_replicas, cfg.seed) for N, v in zip(cfg.N_list, vars_)])
    if "svg" in cfg.formats:
        emit_plot({"log Var": (np.log(cfg.N_list).tolist(), np.log(vars_).tolist())}, d / "exponent-scan.svg")
    ok = abs(slope - 2 / 3) < 0.08
    write_manifest(d / "exponent-scan.manifest.json", "exponent-scan", argv, cfg, [],
                   {"slope": slope, "intercept": icpt, "r2": r2, "pass": ok})
    print(json.dumps({"slope": slope, "intercept": icpt, "r2": r2, "pass": ok}))
    return 0 if ok else 1


def cmd_bridge_check(args, argv):
    from scipy.stats import norm

    from .kpz_constants import sigma_p_squared
    from .numerics import RngStream
    from .verify import StatReport, bridge_midpoint_sample, ks_distance

    cfg = _config(args)
    mid = bridge_midpoint_sample(cfg.theta, cfg.r, args.half, args.samples, RngStream(cfg.seed))
    sd = math.sqrt(sigma_p_squared(cfg.theta, cfg.r) / 4)
    rep = StatReport("bridge_midpoint", ks_distance(mid, norm(0, sd).cdf), 0.03, args.samples,
                     metadata={"steps": 2 * args.half, "target_sd": sd})
    write_manifest(output_dir(cfg) / "bridge-check.manifest.json", "bridge-check", argv, cfg, [rep])
    return _report_exit([rep])


def cmd_verify_all(args, argv):
    from dataclasses import asdict as _ad

    from .acceptance import run_all

    cfg = _config(args)
    res = run_all(quick=args.quick)
    write_manifest(output_dir(cfg) / "verify-all.manifest.json", "verify-all", argv, cfg,
                   [_ad(r) for r in res], {"quick": args.quick})
    n_ok = sum(r.passed for r in res)
    print(f"{n_ok}/{len(res)} criteria passed")
    return 0 if n_ok == len(res) else 1


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags override it")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
    common.add_argument("--formats", help="comma list from csv,json,svg")
    common.add_argument("--seed", type=int)
    common.add_argument("--theta", type=float)
    common.add_argument("--r", type=float)

    p = _Parser(prog="loggamma-gibbs", description="Log-gamma polymer line ensemble experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    add("kpz-constants", cmd_kpz_constants, "print the scaling constants as JSON")
    sp = add("sample-polymer", cmd_sample_polymer, "sample log Z^{n,N} and F over replicas")
    sp.add_argument("--N", type=_int_list)
    sp.add_argument("--n", type=int, help="column (default floor(r N))")
    sp.add_argument("--replicas", type=int)
    sp = add("sample-chain", cmd_sample_chain, "run one RSK chain and dump the triangle")
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--steps", type=int, default=6)
    sp.add_argument("--M", type=float, default=30.0)
    sp = add("gibbs-resample", cmd_gibbs_resample, "grand-coupling draws for a boundary JSON")
    sp.add_argument("--boundary", required=True)
    sp.add_argument("--samples", type=int, default=1)
    sp = add("verify-monotone", cmd_verify_monotone, "monotone coupling check")
    sp.add_argument("--T", type=int, default=8)
    sp.add_argument("--trials", type=int, default=10000)
    sp = add("verify-gibbs", cmd_verify_gibbs, "Gibbs invariance on RSK top curves")
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--window", type=_int_list, default=[2, 6])
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--M", type=float, default=30.0)
    for name, fn, h in (("tw-scan", cmd_tw_scan, "KS of F against Tracy-Widom GUE across N"),
                        ("exponent-scan", cmd_exponent_scan, "fit of log Var(log Z) against log N")):
        sp = add(name, fn, h)
        sp.add_argument("--N", type=_int_list)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--jobs", type=int, default=1)
    sp = add("bridge-check", cmd_bridge_check, "bridge midpoint against its Gaussian limit")
    sp.add_argument("--half", type=int, default=256)
    sp.add_argument("--samples", type=int, default=10000)
    sp = add("verify-all", cmd_verify_all, "run every acceptance criterion")
    sp.add_argument("--quick", action="store_true", help="reduced sample sizes")
    return p


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return 2
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
