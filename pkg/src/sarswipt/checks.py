"""Quick invariant suite behind ``sarswipt validate``.

Each check runs on a handful of random instances and returns a CheckResult;
the full property suite lives in the test directory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import ProblemInfeasible
from .fastsu import SingleUserInstance, f_of_b, solve_single_user, maximize_ratio_single_user
from .fixedbf import solve_p6, solve_p7, zf_directions
from .metrics import all_harvested, all_sinr, check_feasibility
from .model import UncertaintyModel, generate_channels
from .optimal import maximize_ratio, solve_p2, targets_at
from .robust import solve_p13, worst_case_sar_margin, worst_case_sar_perturbation
from .sim import single_user_scenario


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_eh_model(config: RunConfig, **_):
    eh = config.eh
    x = np.logspace(-9, 2, 200)
    err = np.max(np.abs(eh.inverse(eh.forward(x)) - x) / x)
    ok = eh.forward(0.0) == 0.0 and err <= 1e-9
    return CheckResult("eh round trip", ok, f"max relative error {err:.2e}")


def check_f_monotone(config: RunConfig, instances=10, seed=0, **_):
    sc = single_user_scenario(config)
    eh = config.eh
    rng = np.random.default_rng(seed)
    grid = np.logspace(-4, 4, 100)
    worst = -np.inf
    for _ in range(instances):
        h = (rng.standard_normal(sc.num_antennas) + 1j * rng.standard_normal(sc.num_antennas)) * 0.05
        gamma, lam = targets_at(sc, eh, 1.0)
        inst = SingleUserInstance(h, sc.sar_matrices[0], sc.sar_limits[0], gamma[0], lam[0], sc.noise_antenna,
                                  sc.noise_circuit)
        f = np.array([f_of_b(inst, b, 1.0) for b in grid])
        worst = max(worst, float(np.max(np.diff(f))))
    return CheckResult("f(b) non-increasing", worst <= 1e-10, f"largest increase {worst:.2e}")


def check_fast_vs_sdp(config: RunConfig, instances=5, seed=0, **_):
    sc = single_user_scenario(config)
    worst = 0.0
    n = 0
    for i in range(instances):
        ch = generate_channels(sc, seed + i, config=config.channel)
        try:
            a = maximize_ratio_single_user(sc, ch, config.eh, rel_tol=1e-6)
        except ProblemInfeasible:
            continue
        b = maximize_ratio(sc, ch, config.eh, rel_tol=1e-6)
        worst = max(worst, abs(a.t - b.t) / b.t)
        n += 1
    return CheckResult("fast solver matches SDP", n > 0 and worst <= 1e-3, f"{n} instances, max rel diff {worst:.2e}")


def check_tightness(config: RunConfig, instances=5, seed=0, **_):
    sc = single_user_scenario(config)
    eh = config.eh
    gamma, lam = targets_at(sc, eh, 1.0)
    worst = 0.0
    for i in range(instances):
        ch = generate_channels(sc, seed + i, config=config.channel)
        res = solve_single_user(SingleUserInstance.from_scenario(sc, ch, gamma, lam))
        s = all_sinr(res.solution, ch, sc.noise_antenna, sc.noise_circuit)[0] / sc.sinr_targets[0] - 1
        e = all_harvested(res.solution, ch, sc.noise_antenna, eh)[0] / sc.eh_targets[0] - 1
        worst = max(worst, abs(s), abs(e))
    return CheckResult("single-user SINR and EH tight", worst <= 1e-6, f"max relative gap {worst:.2e}")


def check_rank_one(config: RunConfig, instances=5, seed=0, **_):
    sc = config.scenario
    worst, n = 0.0, 0
    gamma, lam = targets_at(sc, config.eh, 1.0)
    for i in range(instances * 4):
        if n == instances:
            break
        ch = generate_channels(sc, seed + i, config=config.channel)
        try:
            sdp = solve_p2(sc, ch, gamma, lam)
        except ProblemInfeasible:
            continue
        worst = max(worst, float(np.max(sdp.rank_ratios)))
        n += 1
    return CheckResult("SDP solutions rank one", n > 0 and worst <= 1e-6, f"{n} instances, max ratio {worst:.2e}")


def check_sar_oracle(config: RunConfig, instances=5, seed=0, **_):
    rng = np.random.default_rng(seed)
    A = config.scenario.sar_matrices[0]
    n = A.shape[0]
    worst = 0.0
    for _ in range(instances):
        G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        W = G @ G.conj().T
        tau = rng.uniform(0.01, 1.0)
        margin = worst_case_sar_margin(W, A, tau)
        X = worst_case_sar_perturbation(W, tau)
        attained = float(np.real(np.trace((A + X) @ W)))
        worst = max(worst, abs(attained - margin) / abs(margin))
    return CheckResult("worst-case SAR maximizer", worst <= 1e-9, f"max relative gap {worst:.2e}")


def check_p6_p7(config: RunConfig, instances=3, seed=0, **_):
    sc = config.scenario.without_sar()
    gamma, lam = targets_at(sc, config.eh, 1.0)
    worst = 0.0
    for i in range(instances):
        ch = generate_channels(sc, seed + i, config=config.channel)
        dirs = zf_directions(ch)
        a = solve_p6(dirs, sc, ch, gamma, lam).objective
        b = solve_p7(dirs, sc, gamma, lam).objective
        worst = max(worst, abs(a - b) / b)
    return CheckResult("allocation on ZF: convex vs closed form", worst <= 1e-6, f"max relative gap {worst:.2e}")


def check_robust_degenerate(config: RunConfig, instances=3, seed=0, **_):
    sc = config.scenario
    gamma, lam = targets_at(sc, config.eh, 1.0)
    zero = UncertaintyModel.uniform(sc.num_users, sc.num_sar, 0.0, 0.0)
    worst, n = 0.0, 0
    for i in range(instances * 4):
        if n == instances:
            break
        ch = generate_channels(sc, seed + i, config=config.channel)
        try:
            nominal = solve_p2(sc, ch, gamma, lam)
        except ProblemInfeasible:
            continue
        robust = solve_p13(sc, ch, zero, gamma, lam)
        worst = max(worst, abs(robust.objective - nominal.objective) / nominal.objective)
        n += 1
    return CheckResult("zero-radius robust equals nominal", n > 0 and worst <= 1e-5,
                       f"{n} instances, max relative gap {worst:.2e}")


def check_optimal_feasible(config: RunConfig, instances=3, seed=0, **_):
    sc = config.scenario
    ok = True
    for i in range(instances):
        ch = generate_channels(sc, seed + i, config=config.channel)
        res = maximize_ratio(sc, ch, config.eh)
        ok &= check_feasibility(res.solution, sc, ch, config.eh, ratio=res.t).feasible
    return CheckResult("max-min solutions re-validate", ok, f"{instances} instances")


CHECKS = (check_eh_model, check_f_monotone, check_fast_vs_sdp, check_tightness, check_rank_one, check_sar_oracle,
          check_p6_p7, check_robust_degenerate, check_optimal_feasible)


def run_checks(config: RunConfig, seed=0) -> list:
    return [check(config, seed=seed) for check in CHECKS]
