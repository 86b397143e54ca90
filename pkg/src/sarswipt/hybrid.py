"""Hybrid beamforming: each beam is a nonnegative combination of its ZF and MRT
directions, w_k = sqrt(x_k) w_k^ZF + sqrt(y_k) w_k^MRT.

Every gain, power and SAR term is linear in (x_k, y_k, s_k) with s_k = sqrt(x_k y_k).
Relaxing that equality to s_k^2 <= x_k y_k gives an SOCP. When the relaxation is
tight the beams are built directly; otherwise the combined directions are kept
and powers and splits are re-allocated on them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import ConicProblem
from .errors import ProblemInfeasible, SaturationExceeded
from .fixedbf import FixedDirections, P6Program, mrt_directions, zf_directions
from .metrics import RHO_MAX, RHO_MIN, BeamformingSolution, check_feasibility
from .optimal import (BISECTION_REL_TOL, T_FLOOR, RatioResult, bisect_ratio, ratio_upper_bound, received_scale,
                      targets_at, verified_ratio)

GAP_TOL = 1e-6
SNAP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HybridGains:
    """Scalars of the hybrid model for unit-norm ZF and MRT directions.

    Q[k, j] = |h_k^H w_j^MRT|, q[k] = |h_k^H w_k^ZF|, r[k] = q[k] Q[k, k]
    (both inner products are real and positive for these directions), e[k] and
    zf_power[k] the squared norms of the MRT and ZF directions, f[k] =
    Re(w_k^ZF^H w_k^MRT), and per SAR matrix l: A[k, l], B[k, l], C[k, l] the
    ZF-ZF, MRT-MRT and real ZF-MRT cross quadratic forms.
    """

    zf: FixedDirections
    mrt: FixedDirections
    Q: np.ndarray
    q: np.ndarray
    r: np.ndarray
    e: np.ndarray
    zf_power: np.ndarray
    f: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def precompute_hybrid_gains(channels, sar_matrices) -> HybridGains:
    zf = zf_directions(channels, sar_matrices)
    mrt = mrt_directions(channels, sar_matrices)
    H = channels.vectors
    inner_mrt = H.conj() @ mrt.vectors.T  # [k, j] = h_k^H w_j^MRT
    inner_zf = np.einsum("ki,ki->k", H.conj(), zf.vectors)
    Q = np.abs(inner_mrt)
    q = np.abs(inner_zf)
    r = np.abs(inner_zf * np.diag(inner_mrt))
    e = np.linalg.norm(mrt.vectors, axis=1) ** 2
    zf_power = np.linalg.norm(zf.vectors, axis=1) ** 2
    f = np.real(np.einsum("ki,ki->k", zf.vectors.conj(), mrt.vectors))
    L = len(sar_matrices)
    K = H.shape[0]
    A = np.zeros((K, L))
    B = np.zeros((K, L))
    C = np.zeros((K, L))
    for l, S in enumerate(sar_matrices):
        for k in range(K):
            z, m = zf.vectors[k], mrt.vectors[k]
            A[k, l] = np.real(np.vdot(z, S @ z))
            B[k, l] = np.real(np.vdot(m, S @ m))
            C[k, l] = np.real(np.vdot(z, S @ m))
    return HybridGains(zf, mrt, Q, q, r, e, zf_power, f, A, B, C)


@dataclass(frozen=True, eq=False)
class HybridCoefficients:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    splits: np.ndarray
    objective: float
    budget_scale: float = float("nan")

    @property
    def gaps(self):
        """sqrt(x y) - s per user, relative to the larger of the two."""
        g = np.sqrt(self.x * self.y)
        top = np.maximum(g, self.s)
        return np.where(top > 0, np.abs(g - self.s) / np.where(top > 0, top, 1.0), 0.0)

    def tight(self, tol=GAP_TOL) -> bool:
        return bool(np.all(self.gaps <= tol))


class P9Program:
    """Cached SOCP over (x, y, s, rho); ``restrict`` in {None, "zf", "mrt"}
    pins y = 0 or x = 0 respectively."""

    def __init__(self, gains: HybridGains, scenario, channels, mode="power", restrict=None):
        if mode not in ("power", "budget"):
            raise ValueError(mode)
        self.gains, self.scenario, self.mode = gains, scenario, mode
        K = scenario.num_users
        sc = received_scale(channels)
        self.scale = sc
        N0, NC = scenario.noise_antenna / sc, scenario.noise_circuit / sc
        Q2, q2, r = gains.Q**2 / sc, gains.q**2 / sc, gains.r / sc
        prob = ConicProblem(f"P9-{mode}")
        # coefficients in units of the budget keep the solver variables O(1)
        self.unit = u = scenario.power_budget
        xv = prob.variable("x", K, nonneg=True)
        yv = prob.variable("y", K, nonneg=True)
        sv = prob.variable("s", K, nonneg=True)
        x, y, s = u * xv, u * yv, u * sv
        m = prob.variable("m", K)
        n = prob.variable("n", K)
        rho = prob.variable("rho", K)
        gamma = prob.parameter("gamma", K, nonneg=True)
        lam = prob.parameter("lam", K, nonneg=True)
        # s is pinned too: with x or y zero the cone forces s = 0, but a solver
        # residual on x or y would leak into s as sqrt(x y)
        if restrict == "zf":
            prob.add("y=0", yv == 0)
            prob.add("s=0", sv == 0)
        elif restrict == "mrt":
            prob.add("x=0", xv == 0)
            prob.add("s=0", sv == 0)
        elif restrict is not None:
            raise ValueError(restrict)
        for k in range(K):
            own = x[k] * q2[k] + y[k] * Q2[k, k] + 2 * s[k] * r[k]
            cross = sum(y[j] * Q2[k, j] for j in range(K) if j != k)
            prob.add(f"sinr[{k}]", own >= gamma[k] * (cross + N0 + m[k]))
            prob.add(f"eh[{k}]", own + cross + N0 >= lam[k] * n[k])
            prob.add_rotated_cone(f"m*rho[{k}]", np.sqrt(NC), m[k], rho[k])
            prob.add_hyperbolic(f"n*(1-rho)[{k}]", n[k], 1 - rho[k])
            prob.add_rotated_cone(f"s^2<=xy[{k}]", sv[k], xv[k], yv[k])
        power = sum(x[k] * gains.zf_power[k] + y[k] * gains.e[k] + 2 * s[k] * gains.f[k] for k in range(K))
        sar = [sum(x[k] * gains.A[k, l] + y[k] * gains.B[k, l] + 2 * s[k] * gains.C[k, l] for k in range(K))
               for l in range(scenario.num_sar)]
        if mode == "power":
            for l, P in enumerate(scenario.sar_limits):
                prob.add(f"sar[{l}]", sar[l] <= P)
            prob.minimize(power)
        else:
            mu = prob.variable("mu", nonneg=True)
            prob.add("power", power <= mu * scenario.power_budget)
            for l, P in enumerate(scenario.sar_limits):
                prob.add(f"sar[{l}]", sar[l] <= mu * P)
            prob.minimize(mu)
        self.problem = prob

    def solve(self, gamma, lam) -> HybridCoefficients | None:
        K = self.scenario.num_users
        self.problem.set("gamma", np.broadcast_to(np.asarray(gamma, float), (K,)).copy())
        self.problem.set("lam", np.broadcast_to(np.asarray(lam, float), (K,)).copy() / self.scale)
        rep = conic.solve_with_retry(self.problem)
        if not rep.ok:
            return None
        x, y, s = (self.unit * np.clip(np.asarray(rep[v], float), 0.0, None) for v in ("x", "y", "s"))
        # a coefficient at solver-noise level is zero; its cross term s goes with it
        noise = SNAP_TOL * (x + y)
        s = np.where((x <= noise) | (y <= noise), 0.0, s)
        x = np.where(x <= noise, 0.0, x)
        y = np.where(y <= noise, 0.0, y)
        g = self.gains
        objective = float(np.sum(x * g.zf_power + y * g.e + 2 * s * g.f))
        mu = float(rep["mu"]) if self.mode == "budget" else float("nan")
        return HybridCoefficients(x, y, s, np.clip(np.asarray(rep["rho"], float), RHO_MIN, RHO_MAX), objective, mu)


def solve_p9(scenario, channels, gains, gamma, lam, restrict=None) -> HybridCoefficients:
    out = P9Program(gains, scenario, channels, restrict=restrict).solve(gamma, lam)
    if out is None:
        raise ProblemInfeasible("hybrid SOCP infeasible")
    return out


def combine(gains: HybridGains, x, y):
    return np.sqrt(x)[:, None] * gains.zf.vectors + np.sqrt(y)[:, None] * gains.mrt.vectors


def combined_directions(gains: HybridGains, coeffs: HybridCoefficients, channels, sar_matrices) -> FixedDirections:
    V = combine(gains, coeffs.x, coeffs.y)
    norms = np.linalg.norm(V, axis=1)
    # a user with x = y = 0 keeps its ZF direction
    V = np.where(norms[:, None] > 0, V / np.where(norms > 0, norms, 1.0)[:, None], gains.zf.vectors)
    return FixedDirections.build(V, channels, sar_matrices, "hybrid")


@dataclass
class HybridResult:
    solution: BeamformingSolution
    coefficients: HybridCoefficients
    direct: bool  # built straight from the SOCP solution


def realize(gains, coeffs, scenario, channels, gamma, lam, program="power"):
    """Turn SOCP coefficients into beams.

    A tight relaxation gives the beams directly. Otherwise the combined
    directions are kept and powers and splits re-allocated on them. Returns
    None when that allocation is infeasible (or, in budget mode, over budget).
    """
    if coeffs.tight():
        sol = BeamformingSolution(combine(gains, coeffs.x, coeffs.y), coeffs.splits, "hybrid")
        return HybridResult(sol, coeffs, True)
    dirs = combined_directions(gains, coeffs, channels, scenario.sar_matrices)
    alloc = P6Program(dirs, scenario, channels, program).solve(gamma, lam)
    if alloc is None or (program == "budget" and alloc.budget_scale > 1.0):
        return None
    return HybridResult(dirs.solution(alloc.powers, alloc.splits, "hybrid:p6"), coeffs, False)


def hybrid_solution(scenario, channels, gamma, lam, gains=None) -> HybridResult:
    """Minimum-power hybrid beams for SINR targets ``gamma`` and rectifier-input
    targets ``lam``."""
    gains = gains or precompute_hybrid_gains(channels, scenario.sar_matrices)
    coeffs = solve_p9(scenario, channels, gains, gamma, lam)
    out = realize(gains, coeffs, scenario, channels, gamma, lam)
    if out is None:
        raise ProblemInfeasible("hybrid fallback allocation infeasible")
    return out


def maximize_ratio_hybrid(scenario, channels, eh, *, rel_tol=BISECTION_REL_TOL, t_lo=T_FLOOR) -> RatioResult:
    """Max-min ratio with hybrid beams.

    Feasibility inside the bisection is certified by the solvers (budget scale
    at most one). At the returned ratio the minimum-power hybrid beams are
    built and re-checked with the metrics.
    """
    gains = precompute_hybrid_gains(channels, scenario.sar_matrices)
    budget = P9Program(gains, scenario, channels, "budget")
    power = P9Program(gains, scenario, channels, "power")

    def feasible_at(t):
        try:
            gamma, lam = targets_at(scenario, eh, t)
        except SaturationExceeded:
            return None
        coeffs = budget.solve(gamma, lam)
        if coeffs is None or coeffs.budget_scale > 1.0:
            return None
        return realize(gains, coeffs, scenario, channels, gamma, lam, "budget")

    def realize_min_power(t, witness):
        gamma, lam = targets_at(scenario, eh, t)
        coeffs = power.solve(gamma, lam)
        out = None if coeffs is None else realize(gains, coeffs, scenario, channels, gamma, lam)
        if out is not None and out.solution.transmit_power <= scenario.power_budget * (1 + 1e-9):
            yield out
        yield witness

    def verify(t, out):
        return check_feasibility(out.solution, scenario, channels, eh, ratio=t).feasible

    t_hi = max(ratio_upper_bound(scenario, channels, eh), 2 * t_lo)
    res = bisect_ratio(feasible_at, t_lo, t_hi, rel_tol)
    t, out = verified_ratio(res, feasible_at, realize_min_power, verify)
    return RatioResult(t, out.solution, res.iterations, out)
