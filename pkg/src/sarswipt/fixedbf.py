"""Fixed-direction beamforming: MRT, ZF and regularized ZF directions, with
convex power and split allocation on top of them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import ConicProblem
from .errors import DegenerateChannel, ProblemInfeasible, SaturationExceeded
from .fastsu import case1_rho
from .metrics import RHO_MAX, RHO_MIN, BeamformingSolution, check_feasibility
from .optimal import (BISECTION_REL_TOL, T_FLOOR, RatioResult, bisect_ratio, ratio_upper_bound, received_scale,
                      targets_at, verified_ratio)

CROSS_GAIN_FLOOR = 1e-12
ZF_DEGENERACY = 1e-10


@dataclass(frozen=True, eq=False)
class FixedDirections:
    """Unit-norm directions w_k (rows) with link gains G[k, j] = |h_k^H w_j|^2
    and radiation gains F[k, l] = w_k^H A_l w_k."""

    vectors: np.ndarray
    gains: np.ndarray
    radiation: np.ndarray
    kind: str = ""

    @classmethod
    def build(cls, vectors, channels, sar_matrices, kind=""):
        V = np.atleast_2d(np.asarray(vectors, dtype=complex))
        norms = np.linalg.norm(V, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("directions must have unit norm")
        H = channels.vectors
        G = np.abs(H.conj() @ V.T) ** 2
        F = np.array([[max(float(np.real(np.vdot(v, A @ v))), 0.0) for A in sar_matrices] for v in V])
        F = F.reshape(len(V), len(sar_matrices))
        for arr in (V, G, F):
            arr.setflags(write=False)
        return cls(V, G, F, kind)

    @property
    def num_users(self):
        return self.vectors.shape[0]

    def solution(self, powers, splits, producer=None) -> BeamformingSolution:
        p = np.clip(np.asarray(powers, dtype=float), 0.0, None)
        return BeamformingSolution(np.sqrt(p)[:, None] * self.vectors, splits, producer or self.kind)


def _unit(v):
    return v / np.linalg.norm(v)


def mrt_directions(channels, sar_matrices=()) -> FixedDirections:
    V = np.array([_unit(h) for h in channels.vectors])
    return FixedDirections.build(V, channels, sar_matrices, "mrt")


def zf_projector(others):
    """Projector onto the orthogonal complement of the columns of ``others``."""
    n = others.shape[0]
    if others.shape[1] == 0:
        return np.eye(n, dtype=complex)
    return np.eye(n, dtype=complex) - others @ np.linalg.pinv(others)


def zf_direction_vectors(channels) -> np.ndarray:
    H = channels.vectors
    K, Nt = H.shape
    if K > Nt:
        raise DegenerateChannel(f"zero-forcing needs Nt >= K, got Nt={Nt}, K={K}")
    out = []
    for k in range(K):
        others = np.delete(H, k, axis=0).T  # Nt x (K-1)
        v = zf_projector(others) @ H[k]
        if np.linalg.norm(v) < ZF_DEGENERACY * np.linalg.norm(H[k]):
            raise DegenerateChannel(f"user {k} lies in the span of the other channels")
        out.append(_unit(v))
    return np.array(out)


def zf_directions(channels, sar_matrices=()) -> FixedDirections:
    return FixedDirections.build(zf_direction_vectors(channels), channels, sar_matrices, "zf")


def rzf_directions(channels, sar_matrices=()) -> FixedDirections:
    H = channels.vectors
    K, Nt = H.shape
    R = K * np.eye(Nt, dtype=complex) + H.T @ H.conj() + sum(sar_matrices, np.zeros((Nt, Nt), dtype=complex))
    V = np.linalg.solve(R, H.T).T
    return FixedDirections.build(np.array([_unit(v) for v in V]), channels, sar_matrices, "rzf")


DIRECTIONS = {"mrt": mrt_directions, "zf": zf_directions, "rzf": rzf_directions}


@dataclass(frozen=True, eq=False)
class Allocation:
    powers: np.ndarray
    splits: np.ndarray
    objective: float
    budget_scale: float = float("nan")


def _radiation(directions, scenario):
    # extra columns are fine (e.g. the same directions reused on scenario.without_sar())
    F = directions.radiation
    if F.shape[1] < scenario.num_sar:
        raise ValueError(f"directions carry {F.shape[1]} SAR rows but the scenario has {scenario.num_sar}; "
                         "build them with the scenario's SAR matrices")
    return F


class P6Program:
    """Cached power/split allocation on fixed directions.

    ``mode="power"`` minimizes total power under the SAR rows; ``mode="budget"``
    minimizes a common scale mu on PT and every SAR limit (always feasible).
    """

    def __init__(self, directions: FixedDirections, scenario, channels, mode="power"):
        if mode not in ("power", "budget"):
            raise ValueError(mode)
        self.directions, self.scenario, self.mode = directions, scenario, mode
        K = scenario.num_users
        s = received_scale(channels)
        self.scale = s
        G = np.where(directions.gains < CROSS_GAIN_FLOOR * s, 0.0, directions.gains) / s
        N0, NC = scenario.noise_antenna / s, scenario.noise_circuit / s
        prob = ConicProblem(f"P6-{mode}")
        # powers in units of the budget keep the solver variables O(1)
        self.unit = scenario.power_budget
        p = self.unit * prob.variable("p", K, nonneg=True)
        m = prob.variable("m", K)
        n = prob.variable("n", K)
        rho = prob.variable("rho", K)
        gamma = prob.parameter("gamma", K, nonneg=True)
        lam = prob.parameter("lam", K, nonneg=True)
        for k in range(K):
            own = G[k, k] * p[k]
            cross = G[k] @ p - own
            # m_k holds the circuit-noise term NC / rho_k
            prob.add(f"sinr[{k}]", own >= gamma[k] * (cross + N0 + m[k]))
            prob.add(f"eh[{k}]", G[k] @ p + N0 >= lam[k] * n[k])
            prob.add_rotated_cone(f"m*rho[{k}]", np.sqrt(NC), m[k], rho[k])
            prob.add_hyperbolic(f"n*(1-rho)[{k}]", n[k], 1 - rho[k])
        power = sum(p[k] for k in range(K))
        F = _radiation(directions, scenario)
        if mode == "power":
            for l, P in enumerate(scenario.sar_limits):
                prob.add(f"sar[{l}]", F[:, l] @ p <= P)
            prob.minimize(power)
        else:
            mu = prob.variable("mu", nonneg=True)
            prob.add("power", power <= mu * scenario.power_budget)
            for l, P in enumerate(scenario.sar_limits):
                prob.add(f"sar[{l}]", F[:, l] @ p <= mu * P)
            prob.minimize(mu)
        self.problem = prob

    def solve(self, gamma, lam) -> Allocation | None:
        K = self.scenario.num_users
        self.problem.set("gamma", np.broadcast_to(np.asarray(gamma, float), (K,)).copy())
        self.problem.set("lam", np.broadcast_to(np.asarray(lam, float), (K,)).copy() / self.scale)
        rep = conic.solve_with_retry(self.problem)
        if not rep.ok:
            return None
        p = self.unit * np.clip(np.asarray(rep["p"], float), 0.0, None)
        rho = np.clip(np.asarray(rep["rho"], float), RHO_MIN, RHO_MAX)
        mu = float(rep["mu"]) if self.mode == "budget" else float("nan")
        return Allocation(p, rho, float(p.sum()), mu)


def solve_p6(directions, scenario, channels, gamma, lam) -> Allocation:
    """Minimum total power on fixed directions; raises ProblemInfeasible."""
    out = P6Program(directions, scenario, channels).solve(gamma, lam)
    if out is None:
        raise ProblemInfeasible("no power allocation meets the targets on these directions")
    return out


def solve_p7(directions, scenario, gamma, lam) -> Allocation:
    """Allocation on interference-free (ZF) directions.

    Without cross gains each user is on its own: both its constraints are tight
    at the optimum, which fixes its split in closed form and its power at the
    smallest value meeting the SINR target. That per-user minimum also minimizes
    every SAR row, so the SAR limits only decide feasibility.
    """
    K = scenario.num_users
    G = directions.gains
    gamma = np.broadcast_to(np.asarray(gamma, float), (K,))
    lam = np.broadcast_to(np.asarray(lam, float), (K,))
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    off = G - np.diag(np.diag(G))
    if np.any(off > CROSS_GAIN_FLOOR * np.max(np.diag(G), initial=0.0)):
        raise ValueError("directions are not interference-free")
    p = np.empty(K)
    rho = np.empty(K)
    for k in range(K):
        g = G[k, k]
        if g <= 0:
            if gamma[k] > 0 or lam[k] > N0:
                raise ProblemInfeasible(f"user {k} has zero useful gain")
            p[k], rho[k] = 0.0, 0.5
            continue
        if gamma[k] == 0:
            rho[k], p[k] = RHO_MIN, max(lam[k] / (1 - RHO_MIN) - N0, 0.0) / g
            continue
        rho[k] = case1_rho(gamma[k], lam[k], N0, NC)
        # SINR tight; the EH constraint is tight by the choice of rho
        p[k] = gamma[k] * (N0 + NC / rho[k]) / g
    F = _radiation(directions, scenario)
    for l, P in enumerate(scenario.sar_limits):
        if F[:, l] @ p > P * (1 + 1e-12):
            raise ProblemInfeasible(f"SAR limit {l} exceeded by the minimum-power allocation")
    return Allocation(p, np.clip(rho, RHO_MIN, RHO_MAX), float(p.sum()), float("nan"))


def p7_budget_scale(alloc: Allocation, directions, scenario) -> float:
    scales = [alloc.objective / scenario.power_budget]
    scales += [float(directions.radiation[:, l] @ alloc.powers) / P for l, P in enumerate(scenario.sar_limits)]
    return max(scales)


def maximize_ratio_fixed(directions: FixedDirections, scenario, channels, eh, *, rel_tol=BISECTION_REL_TOL,
                         t_lo=T_FLOOR, closed_form_zf=True) -> RatioResult:
    """Max-min ratio on fixed directions by bisection over the allocation problem.

    Interference-free directions use the closed-form allocation unless
    ``closed_form_zf`` is False. The allocation at the returned ratio is the
    minimum-power one, re-checked with the metrics.
    """
    G = directions.gains
    interference_free = bool(np.all(G - np.diag(np.diag(G)) <= CROSS_GAIN_FLOOR * np.max(np.diag(G))))
    if closed_form_zf and interference_free:
        def feasible_at(t):
            try:
                gamma, lam = targets_at(scenario, eh, t)
                alloc = solve_p7(directions, scenario, gamma, lam)
            except (SaturationExceeded, ProblemInfeasible):
                return None
            return alloc if alloc.objective <= scenario.power_budget else None

        def realize(t, witness):
            yield witness
    else:
        budget = P6Program(directions, scenario, channels, "budget")
        power = P6Program(directions, scenario, channels, "power")

        def feasible_at(t):
            try:
                gamma, lam = targets_at(scenario, eh, t)
            except SaturationExceeded:
                return None
            alloc = budget.solve(gamma, lam)
            return alloc if alloc is not None and alloc.budget_scale <= 1.0 else None

        def realize(t, witness):
            alloc = power.solve(*targets_at(scenario, eh, t))
            if alloc is not None and alloc.objective <= scenario.power_budget * (1 + 1e-9):
                yield alloc
            yield witness

    def verify(t, alloc):
        sol = directions.solution(alloc.powers, alloc.splits)
        return check_feasibility(sol, scenario, channels, eh, ratio=t).feasible

    t_hi = max(ratio_upper_bound(scenario, channels, eh), 2 * t_lo)
    res = bisect_ratio(feasible_at, t_lo, t_hi, rel_tol)
    t, alloc = verified_ratio(res, feasible_at, realize, verify)
    return RatioResult(t, directions.solution(alloc.powers, alloc.splits), res.iterations, alloc)
