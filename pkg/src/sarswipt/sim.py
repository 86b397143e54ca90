"""Monte Carlo sweeps over scenarios and schemes, robust CDF runs and the
single-user speed benchmark.

Each trial draws one channel realization from ``seed + trial``; the same draw
is reused at every grid point so curves compare like with like. Schemes design
on the channel estimates; their beams are then scored on the true channels
(estimate plus an error drawn in the uncertainty ball, which is the estimate
itself when the radius is zero).
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import backoff_scheme, solve_p14
from .config import SCHEMES, SWEEP_PARAMETERS, RunConfig
from .errors import DegenerateChannel, ProblemInfeasible, RandomizationFailed, SarSwiptError
from .fastsu import maximize_ratio_single_user
from .fixedbf import maximize_ratio_fixed, rzf_directions, zf_directions
from .hybrid import maximize_ratio_hybrid
from .metrics import achieved_ratio, all_sar, check_feasibility
from .model import dbm_to_watts, generate_channels
from .optimal import extract_rank1, maximize_ratio, solve_p2, targets_at
from .robust import maximize_ratio_robust, robust_beamforming, sample_channel_errors, sample_outcomes

CSV_VERSION = 1
SWEEP_COLUMNS = ("parameter", "value", "trial", "seed", "scheme", "status", "t", "design_t", "feasible",
                 "transmit_power", "sar")
TIMING_COLUMNS = ("parameter", "value", "trial", "seed", "scheme", "wall_time")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    trials: int
    seed: int
    schemes: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
        if len(self.values) == 0:
            raise ValueError("grid must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.schemes:
            raise ValueError("no schemes selected")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}")

    @classmethod
    def from_config(cls, config: RunConfig, **overrides):
        s = config.sweep
        params = dict(parameter=s.parameter, values=tuple(s.values), trials=s.trials, seed=s.seed,
                      schemes=tuple(s.schemes))
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)


@dataclass(frozen=True)
class TrialRecord:
    parameter: str
    value: float
    trial: int
    seed: int
    scheme: str
    status: str  # "ok" or the reason no solution was produced
    t: float  # achieved min(SINR/target, EH/target) on the true channels
    design_t: float  # the ratio the scheme aimed for on the estimates
    feasible: bool  # meets every target and limit on the true channels
    transmit_power: float
    sar: tuple
    wall_time: float = field(default=0.0, compare=False)

    def sort_key(self):
        return (self.value, self.trial, SCHEMES.index(self.scheme))

    def row(self) -> dict:
        return {
            "parameter": self.parameter,
            "value": repr(float(self.value)),
            "trial": str(self.trial),
            "seed": str(self.seed),
            "scheme": self.scheme,
            "status": self.status,
            "t": repr(float(self.t)),
            "design_t": repr(float(self.design_t)),
            "feasible": "1" if self.feasible else "0",
            "transmit_power": repr(float(self.transmit_power)),
            "sar": ";".join(repr(float(x)) for x in self.sar),
        }


def scenario_at(config: RunConfig, parameter, value):
    """(scenario, channel radius, SAR radius) at one grid point."""
    sc = config.scenario
    cr, sr = config.channel_radius, config.sar_radius
    if parameter == "sar_limit":
        sc = sc.with_sar_limit(float(value))
    elif parameter == "eh_target":
        sc = sc.replace(eh_targets=np.full(sc.num_users, float(dbm_to_watts(value))))
    elif parameter == "total_power":
        sc = sc.replace(power_budget=float(dbm_to_watts(value)))
    elif parameter == "uncertainty_radius":
        cr = sr = float(value)
    else:
        raise ValueError(parameter)
    return sc, cr, sr


@dataclass
class TrialContext:
    scenario: object
    estimates: object
    eh: object
    uncertainty: object
    config: RunConfig
    rng: np.random.Generator

    @property
    def opts(self):
        return dict(rel_tol=self.config.bisection_rel_tol, t_lo=self.config.t_floor)


def _optimal(ctx):
    r = maximize_ratio(ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)
    return r.t, r.solution


def _fast_su(ctx):
    r = maximize_ratio_single_user(ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)
    return r.t, r.solution


def _fixed(builder):
    def run(ctx):
        dirs = builder(ctx.estimates, ctx.scenario.sar_matrices)
        r = maximize_ratio_fixed(dirs, ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)
        return r.t, r.solution
    return run


def _hybrid(ctx):
    r = maximize_ratio_hybrid(ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)
    return r.t, r.solution


def _robust(ctx):
    r = maximize_ratio_robust(ctx.scenario, ctx.estimates, ctx.uncertainty, ctx.eh, sar_mode=ctx.config.sar_mode,
                              draws=ctx.config.randomization_draws, rng=ctx.rng, **ctx.opts)
    return r.t, r.solution


def _backoff(ctx):
    r = backoff_scheme(ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)
    return r.t, r.solution


def _no_sar(ctx):
    return solve_p14(ctx.scenario, ctx.estimates, ctx.eh, **ctx.opts)


SCHEME_RUNNERS = {
    "optimal": _optimal,
    "fast_su": _fast_su,
    "zf": _fixed(zf_directions),
    "rzf": _fixed(rzf_directions),
    "hybrid": _hybrid,
    "robust": _robust,
    "nonrobust": _optimal,  # designed on the estimates as if they were exact
    "backoff": _backoff,
    "no_sar": _no_sar,
}

_FAILURES = (ProblemInfeasible, DegenerateChannel, RandomizationFailed, SarSwiptError)


def run_trial(config: RunConfig, spec: SweepSpec, value, trial) -> list:
    """All schemes of one (grid point, trial); wall time covers the scheme call only."""
    seed = spec.seed + trial
    scenario, cr, sr = scenario_at(config, spec.parameter, value)
    estimates = generate_channels(scenario, seed, config=config.channel)
    uncertainty = config.uncertainty(scenario, cr, sr)
    err_rng = np.random.default_rng([seed, 1])
    truth = estimates.perturbed(sample_channel_errors(err_rng, uncertainty, scenario.num_antennas, 1)[0])
    records = []
    for name in spec.schemes:
        ctx = TrialContext(scenario, estimates, config.eh, uncertainty, config, np.random.default_rng([seed, 2]))
        start = time.perf_counter()
        try:
            design_t, sol = SCHEME_RUNNERS[name](ctx)
            status = "ok"
        except _FAILURES as exc:
            design_t, sol, status = 0.0, None, type(exc).__name__
        elapsed = time.perf_counter() - start
        if sol is None:
            records.append(TrialRecord(spec.parameter, float(value), trial, seed, name, status, 0.0, 0.0, False, 0.0,
                                       tuple(0.0 for _ in range(scenario.num_sar)), elapsed))
            continue
        t = achieved_ratio(sol, scenario, truth, config.eh)
        feasible = check_feasibility(sol, scenario, truth, config.eh).feasible
        records.append(TrialRecord(spec.parameter, float(value), trial, seed, name, status, t, design_t, feasible,
                                   sol.transmit_power, tuple(all_sar(sol, scenario.sar_matrices)), elapsed))
    return records


def _run_task(args):
    return run_trial(*args)


def run_sweep(spec: SweepSpec, config: RunConfig, jobs=1) -> list:
    """Records for every (grid value, trial, scheme), sorted; deterministic in the seed."""
    if "fast_su" in spec.schemes and (config.scenario.num_users != 1 or config.scenario.num_sar > 1):
        raise ValueError("fast_su needs one user and at most one SAR constraint")
    tasks = [(config, spec, v, i) for v in spec.values for i in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return sorted((r for chunk in chunks for r in chunk), key=TrialRecord.sort_key)


def summarize(records) -> dict:
    """(value, scheme) -> (mean t, feasibility rate, trials)."""
    groups = {}
    for r in records:
        groups.setdefault((r.value, r.scheme), []).append(r)
    return {key: (float(np.mean([r.t for r in rs])), float(np.mean([r.feasible for r in rs])), len(rs))
            for key, rs in sorted(groups.items(), key=lambda kv: (kv[0][0], SCHEMES.index(kv[0][1])))}


def csv_text(columns, rows, header_comment) -> str:
    buf = io.StringIO()
    buf.write(f"# {header_comment}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def sweep_csv(records) -> str:
    return csv_text(SWEEP_COLUMNS, [r.row() for r in records], f"sarswipt sweep v{CSV_VERSION}")


def timing_csv(records) -> str:
    rows = [{"parameter": r.parameter, "value": repr(float(r.value)), "trial": str(r.trial), "seed": str(r.seed),
             "scheme": r.scheme, "wall_time": f"{r.wall_time:.6f}"} for r in records]
    return csv_text(TIMING_COLUMNS, rows, f"sarswipt timing v{CSV_VERSION}")


# -- robust CDFs ---------------------------------------------------------------

@dataclass
class CdfResult:
    """Realized SINR and harvested power per scheme: arrays of shape
    (trials used, samples, users)."""

    sinr: dict
    harvested: dict
    violation_rate: dict  # scheme -> fraction of (trial, sample) pairs missing a target
    trials_used: list
    skipped: list

    def rows(self, quantity) -> list:
        data = self.sinr if quantity == "sinr" else self.harvested
        out = []
        for scheme in sorted(data):
            arr = data[scheme]
            for i, trial in enumerate(self.trials_used):
                for s in range(arr.shape[1]):
                    for k in range(arr.shape[2]):
                        out.append({"scheme": scheme, "trial": str(trial), "sample": str(s), "user": str(k),
                                    "value": repr(float(arr[i, s, k]))})
        return out


CDF_COLUMNS = ("scheme", "trial", "sample", "user", "value")


def run_robust_cdf(config: RunConfig, uncertainty=None, trials=None, samples=None, seed=None,
                   tolerance=1e-6) -> CdfResult:
    """Minimum-power robust and non-robust beams at the nominal targets, scored
    on ``samples`` errors drawn uniformly in the uncertainty balls.

    Draws whose nominal problem is infeasible at the targets are skipped. A
    sample counts as a violation when some user falls short of a target by
    more than ``tolerance`` relative.
    """
    trials = trials or config.robust_cdf.trials
    samples = samples or config.robust_cdf.samples
    seed = config.robust_cdf.seed if seed is None else seed
    sc, eh = config.scenario, config.eh
    unc = uncertainty or config.uncertainty(channel_radius=config.robust_cdf.channel_radius,
                                            sar_radius=config.robust_cdf.sar_radius)
    gamma, lam = targets_at(sc, eh, 1.0)
    sinr = {"robust": [], "nonrobust": []}
    harvested = {"robust": [], "nonrobust": []}
    viol = {"robust": [], "nonrobust": []}
    used, skipped = [], []
    trial = 0
    while len(used) < trials and trial < 20 * trials:
        s = seed + trial
        est = generate_channels(sc, s, config=config.channel)
        try:
            nominal = extract_rank1(solve_p2(sc, est, gamma, lam), producer="nonrobust")
            robust, _ = robust_beamforming(sc, est, unc, gamma, lam, sar_mode=config.sar_mode,
                                           draws=config.randomization_draws, rng=np.random.default_rng([s, 2]))
        except _FAILURES:
            skipped.append(trial)
            trial += 1
            continue
        for name, sol in (("robust", robust), ("nonrobust", nominal)):
            out = sample_outcomes(sol, sc, est, unc, eh, np.random.default_rng([s, 3]), samples)
            sinr[name].append(out.sinr)
            harvested[name].append(out.harvested)
            viol[name].append(out.violations(sc, tolerance))
        used.append(trial)
        trial += 1
    stack = lambda d: {k: np.array(v) for k, v in d.items()}
    rates = {k: float(np.mean(v)) if v else math.nan for k, v in viol.items()}
    return CdfResult(stack(sinr), stack(harvested), rates, used, skipped)


# -- single-user benchmark -----------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    trial: int
    seed: int
    t_fast: float
    t_sdp: float
    time_fast: float
    time_sdp: float
    case: str

    @property
    def rel_diff(self):
        return abs(self.t_fast - self.t_sdp) / self.t_sdp


def single_user_scenario(config: RunConfig):
    sc = config.scenario
    if sc.num_sar > 1:
        raise ValueError("the single-user benchmark uses at most one SAR constraint")
    Nt = config.single_user.num_antennas
    if Nt != sc.num_antennas:
        raise ValueError("single_user.num_antennas must match the scenario SAR matrix size")
    return sc.replace(num_users=1, sinr_targets=sc.sinr_targets[:1], eh_targets=sc.eh_targets[:1])


def run_single_user_bench(config: RunConfig, trials=None, seed=None) -> list:
    """Max-min ratio for K = 1 with the fast solver and with the SDP."""
    trials = trials or config.single_user.trials
    seed = config.single_user.seed if seed is None else seed
    sc = single_user_scenario(config)
    rows = []
    for i in range(trials):
        s = seed + i
        ch = generate_channels(sc, s, config=config.channel)
        t0 = time.perf_counter()
        try:
            fast = maximize_ratio_single_user(sc, ch, config.eh, rel_tol=config.bisection_rel_tol,
                                              t_lo=config.t_floor)
        except ProblemInfeasible:
            continue
        t1 = time.perf_counter()
        sdp = maximize_ratio(sc, ch, config.eh, rel_tol=config.bisection_rel_tol, t_lo=config.t_floor)
        t2 = time.perf_counter()
        rows.append(BenchRow(i, s, fast.t, sdp.t, t1 - t0, t2 - t1, fast.solution.producer))
    return rows


BENCH_COLUMNS = ("trial", "seed", "t_fast", "t_sdp", "rel_diff", "case")


def bench_csv(rows) -> str:
    data = [{"trial": str(r.trial), "seed": str(r.seed), "t_fast": repr(r.t_fast), "t_sdp": repr(r.t_sdp),
             "rel_diff": repr(r.rel_diff), "case": r.case} for r in rows]
    return csv_text(BENCH_COLUMNS, data, f"sarswipt single-user v{CSV_VERSION}")


def bench_timing_csv(rows) -> str:
    data = [{"trial": str(r.trial), "seed": str(r.seed), "time_fast": f"{r.time_fast:.6f}",
             "time_sdp": f"{r.time_sdp:.6f}"} for r in rows]
    return csv_text(("trial", "seed", "time_fast", "time_sdp"), data, f"sarswipt single-user timing v{CSV_VERSION}")
