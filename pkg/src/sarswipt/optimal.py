"""Jointly optimal beamforming and power splitting.

The power-minimization problem is solved as an SDP in W_k = w_k w_k^H; the
relaxation is tight, so beamformers come out of the principal eigenpairs. The
max-min ratio problem wraps that in a bisection over the common ratio t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import conic
from .conic import ConicProblem
from .errors import ProblemInfeasible, RankRecoveryFailed, SaturationExceeded
from .metrics import RHO_MAX, RHO_MIN, BeamformingSolution, check_feasibility

RANK_TOL = 1e-6
BISECTION_REL_TOL = 1e-3
T_FLOOR = 1e-6


def received_scale(channels) -> float:
    """Normalizer for received-power rows so they are O(1) inside the solver."""
    return float(np.mean(channels.norms_squared()))


def targets_at(scenario, eh, t):
    """SINR targets and RF-input EH targets for ratio t.

    Raises SaturationExceeded when t * eh_target reaches the rectifier ceiling.
    """
    gamma = t * np.asarray(scenario.sinr_targets)
    lam = np.asarray(eh.inverse(t * np.asarray(scenario.eh_targets)), dtype=float)
    return gamma, np.atleast_1d(lam)


def ratio_upper_bound(scenario, channels, eh) -> float:
    """A t no scheme can reach: each user's SINR is at most ||h_k||^2 PT / N0 and
    its harvested power at most F(PT ||h_k||^2 + N0)."""
    g = channels.norms_squared()
    PT, N0 = scenario.power_budget, scenario.noise_antenna
    sinr_cap = g * PT / (scenario.sinr_targets * N0)
    eh_cap = np.asarray(eh.forward(PT * g + N0)) / scenario.eh_targets
    return float(min(sinr_cap.min(), eh_cap.min()))


@dataclass
class BisectionResult:
    t: float
    witness: object
    iterations: int
    history: list = field(default_factory=list)


def bisect_ratio(feasible_at: Callable[[float], object], t_lo: float, t_hi: float,
                 rel_tol: float = BISECTION_REL_TOL, max_iter: int = 200) -> BisectionResult:
    """Largest t in [t_lo, t_hi] at which ``feasible_at`` returns a witness.

    ``feasible_at`` returns None when t is infeasible. Feasibility must be
    monotone in t. Midpoints are geometric while the bracket spans more than a
    factor of two, then arithmetic; stops once (hi - lo) <= rel_tol * lo.
    """
    if not 0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    history = []
    witness = feasible_at(t_lo)
    history.append((t_lo, witness is not None))
    if witness is None:
        raise ProblemInfeasible(f"infeasible already at t = {t_lo:g}")
    top = feasible_at(t_hi)
    history.append((t_hi, top is not None))
    if top is not None:
        return BisectionResult(t_hi, top, 2, history)
    lo, hi = t_lo, t_hi
    it = 2
    while hi - lo > rel_tol * lo and it < max_iter:
        mid = math.sqrt(lo * hi) if hi > 2 * lo else 0.5 * (lo + hi)
        cand = feasible_at(mid)
        history.append((mid, cand is not None))
        it += 1
        if cand is not None:
            lo, witness = mid, cand
        else:
            hi = mid
    return BisectionResult(lo, witness, it, history)


def verified_ratio(result: BisectionResult, feasible_at, realize, verify):
    """Walk the feasible ratios of a finished bisection from the top down and
    return (t, candidate) for the first whose realized beams pass ``verify``.

    ``realize(t, witness)`` yields candidates in order of preference (for
    example the minimum-power point first, the witness itself second);
    ``verify(t, candidate)`` is the independent re-check.
    """
    for t in sorted((t for t, ok in result.history if ok), reverse=True):
        witness = result.witness if t == result.t else feasible_at(t)
        if witness is None:
            continue
        for cand in realize(t, witness):
            if cand is not None and verify(t, cand):
                return t, cand
    raise ProblemInfeasible("no ratio from the search passed the feasibility re-check")


@dataclass(frozen=True, eq=False)
class SdpSolution:
    matrices: np.ndarray  # (K, Nt, Nt)
    splits: np.ndarray
    m: np.ndarray  # upper bound on 1/rho_k
    n: np.ndarray  # upper bound on 1/(1 - rho_k)
    objective: float  # total transmit power, W
    rank_ratios: np.ndarray
    budget_scale: float = float("nan")  # mu in the budget form
    report: conic.SolveReport = None

    @property
    def transmit_power(self) -> float:
        return float(sum(np.real(np.trace(W)) for W in self.matrices))


def rank_ratio(W) -> float:
    ev = np.linalg.eigvalsh(0.5 * (W + W.conj().T))
    if ev[-1] <= 0:
        return 0.0
    return float(max(ev[-2], 0.0) / ev[-1]) if len(ev) > 1 else 0.0


class P2Program:
    """Cached SDP for the power-minimization problem at varying targets.

    ``mode="power"`` minimizes total power under the SAR limits. ``mode="budget"``
    instead minimizes a common scale mu on the power budget and all SAR limits;
    a target pair is admissible for the max-min problem iff mu <= 1, and this
    form is always feasible, which keeps the bisection clear of infeasibility
    certificates.
    """

    def __init__(self, scenario, channels, mode="power", sar=True, power_scale=None):
        # power_scale: scalar or per-user; W_k = power_scale_k * (solver variable).
        # Defaults to the power budget so the variables stay O(1) near the max-min point.
        if mode not in ("power", "budget"):
            raise ValueError(mode)
        self.scenario, self.channels, self.mode = scenario, channels, mode
        K, Nt = scenario.num_users, scenario.num_antennas
        s = received_scale(channels)
        self.scale = s
        self.circuit = scenario.noise_circuit / s
        N0, NC = scenario.noise_antenna / s, scenario.noise_circuit / s
        prob = ConicProblem(f"P2-{mode}")
        if power_scale is None:
            power_scale = scenario.power_budget
        self.power_scale = np.broadcast_to(np.asarray(power_scale, float), (K,)).copy()
        W = [self.power_scale[k] * prob.hermitian(f"W{k}", Nt) for k in range(K)]
        m = prob.variable("m", K)
        n = prob.variable("n", K)
        rho = prob.variable("rho", K)
        gamma = prob.parameter("gamma", K, nonneg=True)
        lam = prob.parameter("lam", K, nonneg=True)
        for k in range(K):
            h = channels[k]
            Hk = np.outer(h, h.conj()) / s
            own = prob.inner(Hk, W[k])
            total = sum(prob.inner(Hk, Wj) for Wj in W)
            # m_k carries the circuit-noise term NC / rho_k, which keeps it O(1)
            prob.add(f"sinr[{k}]", own >= gamma[k] * (total - own + N0 + m[k]))
            prob.add(f"eh[{k}]", total + N0 >= lam[k] * n[k])
            prob.add_rotated_cone(f"m*rho[{k}]", np.sqrt(NC), m[k], rho[k])
            prob.add_hyperbolic(f"n*(1-rho)[{k}]", n[k], 1 - rho[k])
        power = sum(Wk.trace() for Wk in W)
        sar_rows = []
        if sar:
            for l, (A, P) in enumerate(zip(scenario.sar_matrices, scenario.sar_limits)):
                sar_rows.append((l, sum(prob.inner(A, Wk) for Wk in W), P))
        if mode == "power":
            for l, expr, P in sar_rows:
                prob.add(f"sar[{l}]", expr <= P)
            prob.minimize(power)
        else:
            mu = prob.variable("mu", nonneg=True)
            prob.add("power", power <= mu * scenario.power_budget)
            for l, expr, P in sar_rows:
                prob.add(f"sar[{l}]", expr <= mu * P)
            prob.minimize(mu)
        self.problem = prob

    def solve(self, gamma, lam, tolerance=conic.DEFAULT_TOL) -> SdpSolution | None:
        """Returns None when the solver reports infeasibility or fails twice."""
        K = self.scenario.num_users
        self.problem.set("gamma", np.broadcast_to(np.asarray(gamma, float), (K,)).copy())
        self.problem.set("lam", np.broadcast_to(np.asarray(lam, float), (K,)).copy() / self.scale)
        rep = conic.solve_with_retry(self.problem, tolerance)
        if not rep.ok:
            return None
        Ws = np.array([0.5 * self.power_scale[k] * (rep[f"W{k}"] + rep[f"W{k}"].conj().T) for k in range(K)])
        m = np.asarray(rep["m"], float) / self.circuit
        n = np.asarray(rep["n"], float)
        return SdpSolution(
            matrices=Ws,
            splits=np.clip(np.asarray(rep["rho"], float), RHO_MIN, RHO_MAX),
            m=m,
            n=n,
            objective=float(sum(np.real(np.trace(Wk)) for Wk in Ws)),
            rank_ratios=np.array([rank_ratio(Wk) for Wk in Ws]),
            budget_scale=float(rep["mu"]) if self.mode == "budget" else float("nan"),
            report=rep,
        )


def solve_p2(scenario, channels, gamma, lam, sar=True) -> SdpSolution:
    """Minimum-power SDP for SINR targets ``gamma`` and RF-input EH targets ``lam``.

    Raises ProblemInfeasible if the solver finds no feasible point.
    """
    sol = P2Program(scenario, channels, "power", sar).solve(gamma, lam)
    if sol is None:
        raise ProblemInfeasible("P2 infeasible for the given targets")
    return sol


def extract_rank1(sdp: SdpSolution, threshold=RANK_TOL, producer="optimal") -> BeamformingSolution:
    """Principal eigenvector of each W_k scaled by sqrt of its eigenvalue."""
    ratios = [rank_ratio(W) for W in sdp.matrices]
    if max(ratios) > threshold:
        raise RankRecoveryFailed(ratios, threshold)
    beams = []
    for W in sdp.matrices:
        ev, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        beams.append(np.sqrt(max(ev[-1], 0.0)) * U[:, -1])
    return BeamformingSolution(np.array(beams), sdp.splits, producer)


@dataclass
class RatioResult:
    t: float
    solution: BeamformingSolution
    iterations: int = 0
    detail: object = None


def maximize_ratio(scenario, channels, eh, *, sar=True, rel_tol=BISECTION_REL_TOL, t_lo=T_FLOOR) -> RatioResult:
    """Max-min SINR/EH ratio under the power budget and SAR limits.

    Bisection over t using the budget-form SDP; at the returned t the beams come
    from the minimum-power SDP and are re-checked with the metrics.
    Raises ProblemInfeasible when even ``t_lo`` cannot be met.
    """
    budget = P2Program(scenario, channels, "budget", sar)
    power = P2Program(scenario, channels, "power", sar)

    def feasible_at(t):
        try:
            gamma, lam = targets_at(scenario, eh, t)
        except SaturationExceeded:
            return None
        sol = budget.solve(gamma, lam)
        if sol is None or sol.budget_scale > 1.0:
            return None
        return sol

    def realize(t, witness):
        for sdp in (power.solve(*targets_at(scenario, eh, t)), witness):
            if sdp is None or sdp.transmit_power > scenario.power_budget * (1 + 1e-9):
                continue
            try:
                yield sdp, extract_rank1(sdp)
            except RankRecoveryFailed:
                continue

    checked = scenario if sar else scenario.without_sar()

    def verify(t, cand):
        return check_feasibility(cand[1], checked, channels, eh, ratio=t).feasible

    t_hi = max(ratio_upper_bound(scenario, channels, eh), 2 * t_lo)
    res = bisect_ratio(feasible_at, t_lo, t_hi, rel_tol)
    t, (sdp, solution) = verified_ratio(res, feasible_at, realize, verify)
    return RatioResult(t, solution, res.iterations, sdp)
