"""Power-backoff benchmark: optimize without SAR limits, then scale the beams
down until every SAR limit holds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import BeamformingSolution, achieved_ratio, all_sar, optimize_splits
from .optimal import BISECTION_REL_TOL, T_FLOOR, maximize_ratio


def solve_p14(scenario, channels, eh, *, rel_tol=BISECTION_REL_TOL, t_lo=T_FLOOR):
    """Max-min ratio with only the power budget (no SAR rows); returns (t, solution)."""
    res = maximize_ratio(scenario.without_sar(), channels, eh, rel_tol=rel_tol, t_lo=t_lo)
    return res.t, res.solution


def sar_excess(solution, sar_matrices, sar_limits) -> np.ndarray:
    """delta_l = sum_k w_k^H A_l w_k / P_l."""
    return all_sar(solution, sar_matrices) / np.asarray(sar_limits, dtype=float)


def backoff(solution, sar_matrices, sar_limits) -> BeamformingSolution:
    """Scale every beam by 1 / sqrt(max(1, max_l delta_l)); the worst SAR row
    ends exactly at its limit whenever some limit was exceeded."""
    if len(sar_limits) == 0:
        return solution
    worst = float(np.max(sar_excess(solution, sar_matrices, sar_limits)))
    if worst <= 1.0:
        return solution
    return solution.scaled(1.0 / math.sqrt(worst), "backoff")


@dataclass
class BackoffResult:
    t: float  # achieved after scaling and split re-optimization
    t_unconstrained: float  # from the problem without SAR rows
    solution: BeamformingSolution
    scale: float  # power factor applied, <= 1


def backoff_scheme(scenario, channels, eh, *, rel_tol=BISECTION_REL_TOL, t_lo=T_FLOOR) -> BackoffResult:
    """Solve without SAR, back off, re-optimize each user's split for the scaled
    beams, and report the achieved ratio."""
    t0, sol = solve_p14(scenario, channels, eh, rel_tol=rel_tol, t_lo=t_lo)
    scaled = backoff(sol, scenario.sar_matrices, scenario.sar_limits)
    scale = scaled.transmit_power / sol.transmit_power if sol.transmit_power > 0 else 1.0
    if scaled is not sol:
        scaled = scaled.with_splits(optimize_splits(scaled.beamformers, scenario, channels, eh), "backoff")
    return BackoffResult(achieved_ratio(scaled, scenario, channels, eh), t0, scaled, scale)
