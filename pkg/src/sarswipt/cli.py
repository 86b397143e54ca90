"""Command line entry point: ``sarswipt {sweep, robust-cdf, single-user-bench, validate}``."""
from __future__ import annotations

import argparse
import importlib.metadata
import platform
import sys
from pathlib import Path

from . import __version__
from .checks import run_checks
from .config import SCHEMES, default_config, load_config
from .errors import ConfigError
from .sim import (CDF_COLUMNS, SweepSpec, csv_text, bench_csv, bench_timing_csv, run_robust_cdf,
                  run_single_user_bench, run_sweep, summarize, sweep_csv, timing_csv)

U64 = 2**64


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _schemes(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown schemes {bad}; choose from {', '.join(SCHEMES)}")
    return names


def build_parser():
    p = argparse.ArgumentParser(prog="sarswipt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("sweep", "Monte Carlo sweep over one scenario parameter"),
                            ("robust-cdf", "realized SINR and EH of robust and non-robust beams"),
                            ("single-user-bench", "fast single-user solver against the SDP"),
                            ("validate", "quick invariant checks")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=Path, help="TOML run configuration (defaults when omitted)")
        s.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        s.add_argument("--seed", type=_seed, help="base seed (unsigned 64-bit)")
        s.add_argument("--trials", type=_positive, help="trials (per grid point for sweeps)")
        s.add_argument("--schemes", type=_schemes, help="comma-separated scheme names")
        s.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    return p


def _versions():
    out = [f"python {platform.python_version()}", f"sarswipt {__version__}"]
    for pkg in ("numpy", "scipy", "cvxpy", "clarabel"):
        try:
            out.append(f"{pkg} {importlib.metadata.version(pkg)}")
        except importlib.metadata.PackageNotFoundError:
            out.append(f"{pkg} missing")
    return out


def write_manifest(out: Path, args, config, extra=()):
    lines = [f"command: {args.command}",
             f"config: {args.config if args.config else '<defaults>'}",
             f"config_sha256: {config.source_hash}",
             f"seed: {args.seed if args.seed is not None else '<config>'}",
             f"trials: {args.trials if args.trials is not None else '<config>'}",
             f"schemes: {','.join(args.schemes) if args.schemes else '<config>'}",
             f"jobs: {args.jobs}"]
    lines += list(extra)
    lines += [f"version: {v}" for v in _versions()]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _sweep(args, config, out):
    spec = SweepSpec.from_config(config, trials=args.trials, seed=args.seed, schemes=args.schemes)
    records = run_sweep(spec, config, jobs=args.jobs)
    (out / "sweep.csv").write_text(sweep_csv(records))
    (out / "timing.csv").write_text(timing_csv(records))
    for (value, scheme), (mean_t, rate, n) in summarize(records).items():
        print(f"{spec.parameter}={value:g} {scheme:>9}: mean t {mean_t:.4f}, feasible {rate:.2f} ({n} trials)")
    return [f"seed_base: {spec.seed}", f"parameter: {spec.parameter}", f"values: {','.join(repr(v) for v in spec.values)}",
            f"records: {len(records)}"]


def _robust_cdf(args, config, out):
    res = run_robust_cdf(config, trials=args.trials, seed=args.seed)
    (out / "cdf_sinr.csv").write_text(csv_text(CDF_COLUMNS, res.rows("sinr"), "sarswipt cdf sinr v1"))
    (out / "cdf_eh.csv").write_text(csv_text(CDF_COLUMNS, res.rows("eh"), "sarswipt cdf eh v1"))
    for scheme, rate in sorted(res.violation_rate.items()):
        print(f"{scheme:>9}: violation probability {rate:.3f}")
    seed = config.robust_cdf.seed if args.seed is None else args.seed
    return [f"seed_base: {seed}", f"trials_used: {len(res.trials_used)}", f"trials_skipped: {len(res.skipped)}"] + [
        f"violation_rate_{k}: {v!r}" for k, v in sorted(res.violation_rate.items())]


def _single_user(args, config, out):
    rows = run_single_user_bench(config, trials=args.trials, seed=args.seed)
    seed = config.single_user.seed if args.seed is None else args.seed
    (out / "single_user.csv").write_text(bench_csv(rows))
    (out / "timing.csv").write_text(bench_timing_csv(rows))
    if not rows:
        print("no feasible instances")
        return [f"seed_base: {seed}", "rows: 0"]
    fast = sum(r.time_fast for r in rows)
    sdp = sum(r.time_sdp for r in rows)
    worst = max(r.rel_diff for r in rows)
    print(f"{'trial':>5} {'t_fast':>12} {'t_sdp':>12} {'rel diff':>9} {'fast s':>8} {'sdp s':>8}")
    for r in rows:
        print(f"{r.trial:>5} {r.t_fast:>12.6g} {r.t_sdp:>12.6g} {r.rel_diff:>9.1e} {r.time_fast:>8.4f} "
              f"{r.time_sdp:>8.4f}")
    print(f"max relative difference {worst:.2e}; total time fast {fast:.3f} s, SDP {sdp:.3f} s")
    return [f"seed_base: {seed}", f"rows: {len(rows)}", f"max_rel_diff: {worst!r}"]


def _validate(args, config, out):
    results = run_checks(config, seed=args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    if not all(r.passed for r in results):
        raise SystemExit(1)
    return [f"checks: {len(results)}"]


COMMANDS = {"sweep": _sweep, "robust-cdf": _robust_cdf, "single-user-bench": _single_user, "validate": _validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else default_config()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    try:
        extra = COMMANDS[args.command](args, config, out)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_manifest(out, args, config, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
