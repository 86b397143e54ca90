"""Worst-case robust beamforming under bounded channel and SAR-matrix errors.

Channel errors lie in balls ||dh_k|| <= r_k, SAR-matrix errors in Frobenius
balls ||dA_l||_F <= tau_l. Each per-user quadratic constraint over a ball is
turned into one LMI by the S-lemma, and the worst-case SAR exposure has the
closed form trace(A W) + tau ||W||_F.

The LMIs are written after the congruence diag(sqrt(r) I, 1), with multiplier
v = u r, so the blocks stay well scaled even for radii many orders of magnitude
below the channel norm:

    [[r Q + v I,        sqrt(r) Q h],
     [sqrt(r) h^H Q,    h^H Q h - c - r v]]  >= 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import brentq

from . import conic
from .conic import ConicProblem, HermitianExpr
from .errors import ProblemInfeasible, RandomizationFailed, SaturationExceeded
from .metrics import RHO_MAX, RHO_MIN, BeamformingSolution, all_harvested, all_sinr
from .optimal import (BISECTION_REL_TOL, RANK_TOL, T_FLOOR, RatioResult, bisect_ratio, rank_ratio,
                      ratio_upper_bound, received_scale, targets_at, verified_ratio)

RANDOMIZATION_DRAWS = 1000
ROBUST_REL_TOL = 1e-6
SAR_MODES = ("exact", "surrogate")


# -- worst-case SAR ------------------------------------------------------------

def worst_case_sar_margin(W_bar, A_hat, tau) -> float:
    """max over ||dA||_F <= tau of trace((A + dA) W) = trace(A W) + tau ||W||_F."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    W_bar = np.asarray(W_bar, dtype=complex)
    return float(np.real(np.trace(np.asarray(A_hat) @ W_bar)) + tau * np.linalg.norm(W_bar, "fro"))


def worst_case_sar_perturbation(W_bar, tau) -> np.ndarray:
    """The maximizing error tau W / ||W||_F (zero when W = 0)."""
    W_bar = np.asarray(W_bar, dtype=complex)
    nrm = np.linalg.norm(W_bar, "fro")
    if nrm == 0:
        return np.zeros_like(W_bar)
    return tau * W_bar / nrm


def sar_surrogate_factor(A_hat, tau) -> float:
    """Multiplier (1 + tau / ||A||_F) of the linear worst-case SAR surrogate."""
    return 1.0 + tau / np.linalg.norm(np.asarray(A_hat), "fro")


# -- worst-case quadratic over a ball -------------------------------------------

def min_quadratic_over_ball(Q, h, radius) -> tuple[float, np.ndarray]:
    """min over ||d|| <= radius of (h + d)^H Q (h + d) for Hermitian Q.

    A trust-region subproblem: the minimizer solves (Q + mu I) d = -Q h with
    mu >= max(0, -lambda_min) and mu (radius - ||d||) = 0. Returns the value and
    the minimizing d.
    """
    Q = 0.5 * (np.asarray(Q, dtype=complex) + np.asarray(Q, dtype=complex).conj().T)
    h = np.asarray(h, dtype=complex)
    value = lambda d: float(np.real(np.vdot(h + d, Q @ (h + d))))
    if radius == 0:
        return value(np.zeros_like(h)), np.zeros_like(h)
    lam, U = np.linalg.eigh(Q)
    g = U.conj().T @ (Q @ h)
    scale = max(np.max(np.abs(lam)), 1e-300)
    lam_min = lam[0]

    def step(mu):
        return -(U @ (g / (lam + mu)))

    if lam_min > 1e-14 * scale:
        d = step(0.0)
        if np.linalg.norm(d) <= radius:
            return value(d), d
    lo = max(0.0, -lam_min)
    # components along the smallest eigenvalue decide between easy and hard case
    small = np.abs(lam - lam_min) <= 1e-12 * scale
    norm_at = lambda mu: float(np.linalg.norm(g / (lam + mu)))
    if np.all(np.abs(g[small]) <= 1e-14 * max(np.linalg.norm(g), 1e-300)) and lam_min <= 0:
        # hard case: solve on the other components at mu = -lambda_min, pad along the bottom eigenvector
        gs = np.where(small, 0.0, g)
        denom = np.where(small, 1.0, lam + lo)
        d_part = -(U @ (gs / denom))
        rest = radius**2 - float(np.linalg.norm(d_part)) ** 2
        if rest >= 0:
            d = d_part + math.sqrt(rest) * U[:, 0]
            return value(d), d
    phi = lambda mu: norm_at(mu) - radius
    a = lo + 1e-15 * max(scale, 1.0)
    while phi(a) < 0 and a > lo:
        a = lo + 0.5 * (a - lo)
        if a - lo < 1e-300:
            break
    b = max(a, 1.0) * 2
    while phi(b) > 0:
        b *= 2
    if phi(a) <= 0:
        mu = a
    else:
        mu = brentq(phi, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    d = step(mu)
    return value(d), d


def _user_forms(beamformers, k, gamma):
    """Q_k = w_k w_k^H - gamma sum_{j != k} w_j w_j^H and the total sum w_j w_j^H."""
    Wm = np.einsum("ki,kj->kij", beamformers, beamformers.conj())
    total = Wm.sum(axis=0)
    return (1 + gamma) * Wm[k] - gamma * total, total


def worst_case_margins(solution, scenario, channels, uncertainty, eh, ratio=1.0):
    """Relative worst-case slack of each user's SINR and EH constraint.

    Returns (sinr_slack, eh_slack), arrays of K values; a constraint holds for
    every error in its ball iff its slack is >= 0. SINR slack is
    min_h h^H Q h / (gamma (N0 + NC / rho)) - 1, EH slack the analogous ratio
    of the worst received power to the rectifier-input target.
    """
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    gamma, lam = targets_at(scenario, eh, ratio)
    V = solution.beamformers
    K = scenario.num_users
    s_slack, e_slack = np.empty(K), np.empty(K)
    for k in range(K):
        rho = solution.splits[k]
        r = uncertainty.channel_bounds[k]
        Qk, total = _user_forms(V, k, gamma[k])
        worst, _ = min_quadratic_over_ball(Qk, channels[k], r)
        s_slack[k] = worst / (gamma[k] * (N0 + NC / rho)) - 1
        worst_rx, _ = min_quadratic_over_ball(total, channels[k], r)
        need = lam[k] / (1 - rho)
        e_slack[k] = (worst_rx + N0) / need - 1 if need > 0 else math.inf
    return s_slack, e_slack


def worst_case_sar(solution, scenario, uncertainty) -> np.ndarray:
    W_bar = solution.beamformers.T @ solution.beamformers.conj()
    return np.array([worst_case_sar_margin(W_bar, A, tau)
                     for A, tau in zip(scenario.sar_matrices, uncertainty.sar_bounds)])


def is_robust_feasible(solution, scenario, channels, uncertainty, eh, ratio=1.0, tolerance=ROBUST_REL_TOL,
                       sar_mode="exact") -> bool:
    s_slack, e_slack = worst_case_margins(solution, scenario, channels, uncertainty, eh, ratio)
    if np.any(s_slack < -tolerance) or np.any(e_slack < -tolerance):
        return False
    if solution.transmit_power > scenario.power_budget * (1 + tolerance):
        return False
    return bool(np.all(_sar_rows(solution, scenario, uncertainty, sar_mode)
                       <= np.asarray(scenario.sar_limits) * (1 + tolerance)))


def _sar_rows(solution, scenario, uncertainty, sar_mode):
    if sar_mode == "exact":
        return worst_case_sar(solution, scenario, uncertainty)
    W_bar = solution.beamformers.T @ solution.beamformers.conj()
    return np.array([sar_surrogate_factor(A, tau) * float(np.real(np.trace(A @ W_bar)))
                     for A, tau in zip(scenario.sar_matrices, uncertainty.sar_bounds)])


# -- sampling ------------------------------------------------------------------

def sample_ball(rng, radius, dim, size, boundary=False) -> np.ndarray:
    """``size`` complex vectors uniform in (or on) the ball of the given radius."""
    z = rng.standard_normal((size, dim)) + 1j * rng.standard_normal((size, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    if boundary:
        return radius * z
    # the real dimension is 2 dim
    return radius * rng.uniform(size=(size, 1)) ** (1 / (2 * dim)) * z


def sample_hermitian_ball(rng, radius, dim, size, boundary=False) -> np.ndarray:
    """Hermitian matrices uniform in (or on) the Frobenius ball."""
    X = rng.standard_normal((size, dim, dim)) + 1j * rng.standard_normal((size, dim, dim))
    X = 0.5 * (X + X.conj().transpose(0, 2, 1))
    X /= np.linalg.norm(X, axis=(1, 2), keepdims=True)
    if boundary:
        return radius * X
    return radius * rng.uniform(size=(size, 1, 1)) ** (1 / (dim * dim)) * X


def sample_channel_errors(rng, uncertainty, num_antennas, size, boundary=False) -> np.ndarray:
    """Errors of shape (size, K, Nt), user k drawn from its own ball."""
    K = len(uncertainty.channel_bounds)
    out = np.empty((size, K, num_antennas), dtype=complex)
    for k, r in enumerate(uncertainty.channel_bounds):
        out[:, k] = sample_ball(rng, r, num_antennas, size, boundary)
    return out


@dataclass(frozen=True, eq=False)
class SampledOutcome:
    """Realized SINR and harvested power per (sample, user), SAR per (sample, l)."""

    sinr: np.ndarray
    harvested: np.ndarray
    sar: np.ndarray

    def violations(self, scenario, tolerance=0.0) -> np.ndarray:
        """Per-sample flag: some user misses its SINR or EH target by more than
        ``tolerance`` relative."""
        bad_s = self.sinr < np.asarray(scenario.sinr_targets) * (1 - tolerance)
        bad_e = self.harvested < np.asarray(scenario.eh_targets) * (1 - tolerance)
        return np.any(bad_s | bad_e, axis=1)

    def violation_rate(self, scenario, tolerance=0.0) -> float:
        return float(np.mean(self.violations(scenario, tolerance)))


def sample_outcomes(solution, scenario, estimates, uncertainty, eh, rng, size, boundary=False) -> SampledOutcome:
    """Evaluate a solution on ``size`` channels and SAR matrices drawn around the estimates."""
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    dh = sample_channel_errors(rng, uncertainty, scenario.num_antennas, size, boundary)
    W_bar = solution.beamformers.T @ solution.beamformers.conj()
    sinr = np.empty((size, scenario.num_users))
    harvested = np.empty_like(sinr)
    for i in range(size):
        ch = estimates.perturbed(dh[i])
        sinr[i] = all_sinr(solution, ch, N0, NC)
        harvested[i] = all_harvested(solution, ch, N0, eh)
    sar = np.empty((size, scenario.num_sar))
    for l, (A, tau) in enumerate(zip(scenario.sar_matrices, uncertainty.sar_bounds)):
        dA = sample_hermitian_ball(rng, tau, scenario.num_antennas, size, boundary)
        sar[:, l] = np.real(np.einsum("sij,ji->s", A[None] + dA, W_bar))
    return SampledOutcome(sinr, harvested, sar)


# -- LMI blocks ----------------------------------------------------------------

def _column(expr, n):
    return cp.reshape(expr, (n, 1), order="F")


def _hermitian_block(A: HermitianExpr, b_re, b_im, corner, n) -> HermitianExpr:
    """[[A, b], [b^H, corner]] for Hermitian A, complex column b and real corner."""
    zero = np.zeros((1, 1))
    c = cp.reshape(corner, (1, 1), order="F")
    re = cp.bmat([[A.re, _column(b_re, n)], [_column(b_re, n).T, c]])
    im = cp.bmat([[A.im, _column(b_im, n)], [-_column(b_im, n).T, zero]])
    return HermitianExpr(re, im)


def _ball_lmi(Q: HermitianExpr, h, radius, constant, v) -> HermitianExpr:
    """S-lemma block for h'^H Q h' - constant >= 0 over ||h' - h|| <= radius."""
    h = np.asarray(h, dtype=complex)
    n = h.size
    Qh_re, Qh_im = Q.matvec(h)
    sr = math.sqrt(radius)
    top = radius * Q + HermitianExpr(v * np.eye(n), np.zeros((n, n)))
    corner = ConicProblem.quad(h, Q) - constant - radius * v
    return _hermitian_block(top, sr * Qh_re, sr * Qh_im, corner, n)


def build_sinr_lmi(matrices, k, h_hat, gamma, radius, noise, circuit_term, v) -> HermitianExpr:
    """Block that is PSD for some v >= 0 iff the SINR constraint of user k holds
    for every channel within ``radius`` of ``h_hat``.

    ``matrices`` are the W_j (HermitianExpr or arrays), ``circuit_term`` stands
    for NC / rho_k, and ``v`` equals u_k * radius with u_k the S-lemma
    multiplier.
    """
    W = [_as_hermitian(Wj) for Wj in matrices]
    # HermitianExpr on the left so cvxpy parameters scale it rather than the other way round
    Q = W[k] - _sum(W[j] for j in range(len(W)) if j != k) * gamma
    return _ball_lmi(Q, h_hat, radius, gamma * (noise + circuit_term), v)


def build_eh_lmi(matrices, h_hat, lam, radius, noise, n_k, v) -> HermitianExpr:
    """EH counterpart: received power >= lam * n_k - N0 over the ball, n_k >= 1/(1 - rho_k)."""
    W = _sum(_as_hermitian(Wj) for Wj in matrices)
    return _ball_lmi(W, h_hat, radius, lam * n_k - noise, v)


def _as_hermitian(W):
    if isinstance(W, HermitianExpr):
        return W
    W = np.asarray(W, dtype=complex)
    return HermitianExpr(W.real, W.imag)


def _sum(items):
    items = list(items)
    if not items:
        raise ValueError("empty sum")
    out = items[0]
    for it in items[1:]:
        out = out + it
    return out


# -- P13 -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RobustSdpSolution:
    matrices: np.ndarray
    splits: np.ndarray  # 1 / m_k
    u: np.ndarray  # S-lemma multipliers of the SINR blocks
    v: np.ndarray  # and of the EH blocks
    m: np.ndarray  # >= 1 / rho_k
    n: np.ndarray  # >= 1 / (1 - rho_k)
    objective: float
    rank_ratios: np.ndarray
    budget_scale: float = float("nan")
    report: conic.SolveReport = None

    @property
    def auxiliary_gap(self) -> float:
        """max_k |n_k (1 - 1/m_k) - 1|; zero when both auxiliaries are tight."""
        return float(np.max(np.abs(self.n * (1 - 1 / self.m) - 1)))

    @property
    def transmit_power(self) -> float:
        return float(sum(np.real(np.trace(W)) for W in self.matrices))


class P13Program:
    """Cached robust SDP; same ``mode`` convention as the nominal program.

    With ``directions`` (unit-norm rows v_k) the matrices are restricted to
    W_k = p_k v_k v_k^H and only the powers p_k are optimized.
    """

    def __init__(self, scenario, estimates, uncertainty, mode="power", sar_mode="exact", directions=None):
        if mode not in ("power", "budget"):
            raise ValueError(mode)
        if sar_mode not in SAR_MODES:
            raise ValueError(f"sar_mode must be one of {SAR_MODES}")
        uncertainty.check(scenario)
        self.scenario, self.mode = scenario, mode
        K, Nt = scenario.num_users, scenario.num_antennas
        s = received_scale(estimates)
        self.scale = s
        self.circuit = scenario.noise_circuit / s
        N0, NC = scenario.noise_antenna / s, scenario.noise_circuit / s
        radii = np.asarray(uncertainty.channel_bounds) / math.sqrt(s)
        self.radii = radii
        prob = ConicProblem(f"P13-{mode}")
        self.directions = None if directions is None else np.asarray(directions, dtype=complex)
        # matrices in units of the budget keep the solver variables O(1)
        self.unit = u_pt = scenario.power_budget
        if self.directions is None:
            W = [prob.hermitian(f"W{k}", Nt) * u_pt for k in range(K)]
        else:
            p = u_pt * prob.variable("p", K, nonneg=True)
            outer = [np.outer(v, v.conj()) for v in self.directions]
            W = [HermitianExpr(p[k] * outer[k].real, p[k] * outer[k].imag) for k in range(K)]
        m = prob.variable("m", K)
        n = prob.variable("n", K)
        rho = prob.variable("rho", K)
        u = u_pt * prob.variable("u", K, nonneg=True)
        v = u_pt * prob.variable("v", K, nonneg=True)
        gamma = prob.parameter("gamma", K, nonneg=True)
        lam = prob.parameter("lam", K, nonneg=True)
        for k in range(K):
            h = estimates[k] / math.sqrt(s)
            r = radii[k]
            if r > 0:
                prob.add_psd(f"sinr[{k}]", build_sinr_lmi(W, k, h, gamma[k], r, N0, m[k], u[k]))
                prob.add_psd(f"eh[{k}]", build_eh_lmi(W, h, lam[k], r, N0, n[k], v[k]))
            else:
                H = np.outer(h, h.conj())
                own = prob.inner(H, W[k])
                total = sum(prob.inner(H, Wj) for Wj in W)
                prob.add(f"sinr[{k}]", own >= gamma[k] * (total - own + N0 + m[k]))
                prob.add(f"eh[{k}]", total + N0 >= lam[k] * n[k])
                prob.add(f"u[{k}]=0", u[k] == 0)
                prob.add(f"v[{k}]=0", v[k] == 0)
            # m_k holds NC / rho_k in normalized units
            prob.add_rotated_cone(f"m*rho[{k}]", np.sqrt(NC), m[k], rho[k])
            prob.add_hyperbolic(f"n*(1-rho)[{k}]", n[k], 1 - rho[k])
        W_bar = _sum(W)
        sar_rows = []
        for l, (A, P) in enumerate(zip(scenario.sar_matrices, scenario.sar_limits)):
            tau = float(uncertainty.sar_bounds[l])
            nominal = prob.inner(A, W_bar)
            if sar_mode == "surrogate":
                sar_rows.append((l, sar_surrogate_factor(A, tau) * nominal, P))
            elif tau > 0:
                f = prob.variable(f"fro[{l}]", nonneg=True)
                prob.add_soc(f"fro[{l}]", f, cp.hstack([cp.vec(W_bar.re, order="F"), cp.vec(W_bar.im, order="F")]))
                sar_rows.append((l, nominal + tau * f, P))
            else:
                sar_rows.append((l, nominal, P))
        power = W_bar.trace()
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

    def solve(self, gamma, lam, tolerance=conic.DEFAULT_TOL) -> RobustSdpSolution | None:
        K = self.scenario.num_users
        self.problem.set("gamma", np.broadcast_to(np.asarray(gamma, float), (K,)).copy())
        self.problem.set("lam", np.broadcast_to(np.asarray(lam, float), (K,)).copy() / self.scale)
        rep = conic.solve_with_retry(self.problem, tolerance)
        if not rep.ok:
            return None
        if self.directions is None:
            Ws = np.array([self.unit * rep[f"W{k}"] for k in range(K)])
        else:
            p = self.unit * np.clip(np.asarray(rep["p"], float), 0.0, None)
            Ws = np.array([pk * np.outer(v, v.conj()) for pk, v in zip(p, self.directions)])
        # Lowering m_k and n_k to 1/rho_k and 1/(1 - rho_k) keeps every
        # constraint satisfied and leaves the objective unchanged, so the
        # returned point is an optimum with both auxiliaries tight. The solver's
        # own m_k is only accurate in absolute terms (it carries NC / rho_k).
        rho = np.clip(np.asarray(rep["rho"], float), RHO_MIN, RHO_MAX)
        m, n = 1.0 / rho, 1.0 / (1.0 - rho)
        # back from v = u * radius to the multipliers of the unscaled blocks
        safe = np.where(self.radii > 0, self.radii, 1.0)
        u_sinr = np.where(self.radii > 0, self.unit * np.asarray(rep["u"], float) / safe, 0.0)
        u_eh = np.where(self.radii > 0, self.unit * np.asarray(rep["v"], float) / safe, 0.0)
        return RobustSdpSolution(
            matrices=Ws,
            splits=1.0 / m,
            u=u_sinr,
            v=u_eh,
            m=m,
            n=n,
            objective=float(sum(np.real(np.trace(Wk)) for Wk in Ws)),
            rank_ratios=np.array([rank_ratio(Wk) for Wk in Ws]),
            budget_scale=float(rep["mu"]) if self.mode == "budget" else float("nan"),
            report=rep,
        )


def solve_p13(scenario, estimates, uncertainty, gamma, lam, sar_mode="exact") -> RobustSdpSolution:
    """Minimum-power robust SDP; raises ProblemInfeasible."""
    sol = P13Program(scenario, estimates, uncertainty, "power", sar_mode).solve(gamma, lam)
    if sol is None:
        raise ProblemInfeasible("robust SDP infeasible for the given targets and radii")
    return sol


# -- rank-one recovery -----------------------------------------------------------

def _best_split(w_sinr, w_rx, gamma, lam, N0, NC):
    """Split minimizing the power scale a user needs, given its worst-case
    useful value ``w_sinr`` and worst-case received power ``w_rx`` at unit scale.

    The SINR requirement gamma (N0 + NC / rho) / w_sinr falls with rho and the
    EH requirement (lam / (1 - rho) - N0) / w_rx rises, so the best split is
    where they cross. Returns (scale, rho).
    """
    s_need = lambda rho: gamma * (N0 + NC / rho) / w_sinr
    e_need = lambda rho: max(lam / (1 - rho) - N0, 0.0) / w_rx
    gap = lambda rho: s_need(rho) - e_need(rho)
    if gap(RHO_MAX) >= 0:
        rho = RHO_MAX
    elif gap(RHO_MIN) <= 0:
        rho = RHO_MIN
    else:
        rho = brentq(gap, RHO_MIN, RHO_MAX, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return max(s_need(rho), e_need(rho)), rho


def rescale_to_feasibility(V, scenario, estimates, uncertainty, gamma, lam, producer="robust"):
    """Beams ``V`` times the smallest common factor meeting every worst-case
    SINR and EH row, with each split chosen to minimize that factor.

    Both worst-case values are homogeneous of degree two in the beams, so this
    is closed form. Returns None when no scaling works (some worst-case useful
    value is not positive).
    """
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    V = np.asarray(V, dtype=complex)
    gamma = np.broadcast_to(np.asarray(gamma, float), (scenario.num_users,))
    lam = np.broadcast_to(np.asarray(lam, float), (scenario.num_users,))
    need, splits = 0.0, np.empty(scenario.num_users)
    for k in range(scenario.num_users):
        r = uncertainty.channel_bounds[k]
        Qk, total = _user_forms(V, k, gamma[k])
        w_sinr, _ = min_quadratic_over_ball(Qk, estimates[k], r)
        w_rx, _ = min_quadratic_over_ball(total, estimates[k], r)
        if w_sinr <= 0 or w_rx <= 0:
            return None
        a2, splits[k] = _best_split(w_sinr, w_rx, gamma[k], lam[k], N0, NC)
        need = max(need, a2)
    return BeamformingSolution(math.sqrt(need) * V, splits, producer)


def randomize_rank1(matrices, splits, scenario, estimates, uncertainty, gamma, lam, *, draws=RANDOMIZATION_DRAWS,
                    threshold=RANK_TOL, rng=None, sar_mode="exact") -> BeamformingSolution:
    """Gaussian randomization around the SDP matrices.

    Rank-one input returns the eigen-extraction. Otherwise each draw takes
    w_k = W_k^{1/2} z_k with z_k ~ CN(0, I), goes through
    :func:`rescale_to_feasibility`, and is kept if it then
    fits the power budget and worst-case SAR limits. The least-power survivor
    wins. Raises RandomizationFailed with the smallest budget overshoot seen.
    """
    matrices = np.asarray(matrices, dtype=complex)
    splits = np.clip(np.asarray(splits, float), RHO_MIN, RHO_MAX)
    gamma = np.broadcast_to(np.asarray(gamma, float), (scenario.num_users,))
    lam = np.broadcast_to(np.asarray(lam, float), (scenario.num_users,))
    ratios = [rank_ratio(W) for W in matrices]
    if max(ratios) <= threshold:
        beams = []
        for W in matrices:
            ev, U = np.linalg.eigh(0.5 * (W + W.conj().T))
            beams.append(np.sqrt(max(ev[-1], 0.0)) * U[:, -1])
        return BeamformingSolution(np.array(beams), splits, "robust")
    rng = rng if rng is not None else np.random.default_rng(0)
    roots = []
    for W in matrices:
        ev, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        roots.append(U * np.sqrt(np.clip(ev, 0.0, None)))
    K, Nt = matrices.shape[:2]
    best, best_power, best_gap = None, math.inf, math.inf
    limits = np.asarray(scenario.sar_limits)
    for _ in range(draws):
        z = (rng.standard_normal((K, Nt)) + 1j * rng.standard_normal((K, Nt))) / math.sqrt(2)
        V = np.array([roots[k] @ z[k] for k in range(K)])
        cand = rescale_to_feasibility(V, scenario, estimates, uncertainty, gamma, lam, "robust:randomized")
        if cand is None:
            continue
        power = cand.transmit_power
        sar = _sar_rows(cand, scenario, uncertainty, sar_mode)
        gap = max([power / scenario.power_budget] + list(sar / limits)) - 1
        best_gap = min(best_gap, gap)
        if gap <= 0 and power < best_power:
            best, best_power = cand, power
    if best is None:
        raise RandomizationFailed(best_gap, draws)
    return best


def robust_beamforming(scenario, estimates, uncertainty, gamma, lam, *, sar_mode="exact", draws=RANDOMIZATION_DRAWS,
                       rng=None) -> tuple[BeamformingSolution, RobustSdpSolution]:
    """Robust minimum-power beams: solve the robust SDP, eigen-extract or
    randomize, then polish the scale and splits against the exact worst case
    (which removes the solver's last few digits of slack or violation)."""
    sdp = solve_p13(scenario, estimates, uncertainty, gamma, lam, sar_mode)
    sol = randomize_rank1(sdp.matrices, sdp.splits, scenario, estimates, uncertainty, gamma, lam, draws=draws,
                          rng=rng, sar_mode=sar_mode)
    return polish(sol, scenario, estimates, uncertainty, gamma, lam, sar_mode), sdp


def polish(solution, scenario, estimates, uncertainty, gamma, lam, sar_mode="exact") -> BeamformingSolution:
    """Re-allocate powers on the directions of ``solution`` with the robust
    program, then apply :func:`rescale_to_feasibility`.

    Dropping the small eigenvalues of a numerically rank-one SDP point moves
    the quadratic forms h^H Q_k h, which suffer heavy cancellation between the
    useful and interference terms. Re-solving for the powers on the extracted
    directions removes that error; the final rescale absorbs the solver's last
    digits. Returns the input when the re-allocation fails.
    """
    V = solution.beamformers
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        return solution
    dirs = V / norms[:, None]
    alloc = P13Program(scenario, estimates, uncertainty, "power", sar_mode, directions=dirs).solve(gamma, lam)
    if alloc is None:
        return solution
    beams = np.sqrt(np.real(np.array([np.trace(W) for W in alloc.matrices])))[:, None] * dirs
    out = rescale_to_feasibility(beams, scenario, estimates, uncertainty, gamma, lam, solution.producer)
    return out if out is not None else solution


def maximize_ratio_robust(scenario, estimates, uncertainty, eh, *, sar_mode="exact", rel_tol=BISECTION_REL_TOL,
                          t_lo=T_FLOOR, draws=RANDOMIZATION_DRAWS, rng=None) -> RatioResult:
    """Largest ratio t whose targets are met for every error in the uncertainty sets."""
    budget = P13Program(scenario, estimates, uncertainty, "budget", sar_mode)
    power = P13Program(scenario, estimates, uncertainty, "power", sar_mode)

    def feasible_at(t):
        try:
            gamma, lam = targets_at(scenario, eh, t)
        except SaturationExceeded:
            return None
        sol = budget.solve(gamma, lam)
        return sol if sol is not None and sol.budget_scale <= 1.0 else None

    def realize(t, witness):
        gamma, lam = targets_at(scenario, eh, t)
        for sdp in (power.solve(gamma, lam), witness):
            if sdp is None or sdp.transmit_power > scenario.power_budget * (1 + 1e-9):
                continue
            try:
                yield sdp, randomize_rank1(sdp.matrices, sdp.splits, scenario, estimates, uncertainty, gamma, lam,
                                           draws=draws, rng=rng, sar_mode=sar_mode)
            except RandomizationFailed:
                continue

    def verify(t, cand):
        return is_robust_feasible(cand[1], scenario, estimates, uncertainty, eh, ratio=t, sar_mode=sar_mode)

    t_hi = max(ratio_upper_bound(scenario, estimates, eh), 2 * t_lo)
    res = bisect_ratio(feasible_at, t_lo, t_hi, rel_tol)
    t, (sdp, solution) = verified_ratio(res, feasible_at, realize, verify)
    return RatioResult(t, solution, res.iterations, sdp)

