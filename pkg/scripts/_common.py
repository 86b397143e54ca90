"""Shared argument handling for the experiment scripts."""
import argparse
from pathlib import Path

from sarswipt.config import default_config, load_config
from sarswipt.sim import SweepSpec, run_sweep, summarize, sweep_csv, timing_csv


def parser(description, trials):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    return p


def config_from(args):
    return load_config(args.config) if args.config else default_config()


def sweep(args, parameter, values, schemes, stem):
    config = config_from(args)
    spec = SweepSpec(parameter, tuple(values), args.trials, args.seed, tuple(schemes))
    records = run_sweep(spec, config, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{stem}.csv").write_text(sweep_csv(records))
    (args.out / f"{stem}_timing.csv").write_text(timing_csv(records))
    print(f"{parameter:>18} {'scheme':>9} {'mean t':>8} {'feasible':>8}")
    for (value, scheme), (mean_t, rate, _) in summarize(records).items():
        print(f"{value:>18g} {scheme:>9} {mean_t:>8.4f} {rate:>8.2f}")
    return records
