"""Fast optimal solver for one user and one SAR constraint.

With a single user both the SINR and the harvesting constraint are tight at the
optimum, which pins down the split rho and the required signal power c
independently of the beam direction. What remains is

    minimize ||w||^2  s.t.  |h^H w|^2 = c,  w^H A w <= P.

If the matched-filter beam meets the SAR limit it is optimal (case I).
Otherwise the optimum has the form w = a (I + b A)^{-1} h with b > 0 chosen so
the SAR limit is met with equality (case II), found by bisection on the
monotone function ``f_of_b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SarInfeasible, SaturationExceeded
from .metrics import BeamformingSolution
from .optimal import BISECTION_REL_TOL, T_FLOOR, RatioResult, bisect_ratio, ratio_upper_bound, targets_at

B_START = 1.0
B_CAP = 1e12
F_TOL = 1e-9  # |f(b)| <= F_TOL * P at the returned root


@dataclass(frozen=True, eq=False)
class SingleUserInstance:
    channel: np.ndarray
    sar_matrix: np.ndarray | None
    sar_limit: float
    sinr_target: float
    eh_input_target: float  # watts at the rectifier input, i.e. after F^{-1}
    noise_antenna: float
    noise_circuit: float

    def __post_init__(self):
        h = np.asarray(self.channel, dtype=complex).ravel()
        if not np.any(h):
            raise ValueError("channel must be nonzero")
        object.__setattr__(self, "channel", h)
        if self.sar_matrix is not None:
            A = np.asarray(self.sar_matrix, dtype=complex)
            if A.shape != (h.size, h.size):
                raise ValueError("SAR matrix does not match the channel length")
            if np.max(np.abs(A - A.conj().T)) > 1e-12 or np.linalg.eigvalsh(A)[0] < -1e-10 * np.linalg.norm(A, 2):
                raise ValueError("SAR matrix must be Hermitian PSD")
            object.__setattr__(self, "sar_matrix", A)
        if not self.sinr_target > 0:
            raise ValueError("sinr_target must be positive")
        if self.eh_input_target < 0:
            raise ValueError("eh_input_target must be nonnegative")
        if not (self.noise_antenna > 0 and self.noise_circuit >= 0):
            raise ValueError("need noise_antenna > 0 and noise_circuit >= 0")

    @classmethod
    def from_scenario(cls, scenario, channels, gamma, lam):
        if scenario.num_users != 1 or scenario.num_sar > 1:
            raise ValueError("the fast solver handles one user and at most one SAR constraint")
        has_sar = scenario.num_sar == 1
        return cls(
            channel=channels[0],
            sar_matrix=scenario.sar_matrices[0] if has_sar else None,
            sar_limit=scenario.sar_limits[0] if has_sar else math.inf,
            sinr_target=float(np.ravel(gamma)[0]),
            eh_input_target=float(np.ravel(lam)[0]),
            noise_antenna=scenario.noise_antenna,
            noise_circuit=scenario.noise_circuit,
        )

    @cached_property
    def eig(self):
        """(d, h~): eigenvalues of A and the channel in its eigenbasis."""
        d, U = np.linalg.eigh(self.sar_matrix)
        return np.clip(d, 0.0, None), U.conj().T @ self.channel, U


def case1_rho(gamma, lam, N0, NC) -> float:
    """Split at which SINR = gamma and the rectifier input = lam simultaneously
    (positive root of (g+1) N0 rho^2 - ((g+1) N0 - g NC - lam) rho - g NC = 0)."""
    a = (gamma + 1) * N0
    B = a - gamma * NC - lam
    C = gamma * NC
    disc = math.sqrt(B * B + 4 * a * C)
    # pick the cancellation-free expression of the same root
    return (B + disc) / (2 * a) if B >= 0 else 2 * C / (disc - B)


def required_signal(gamma, N0, NC, rho) -> float:
    """|h^H w|^2 needed for SINR gamma at split rho."""
    return gamma * (N0 + NC / rho)


def case1_beamformer(h, gamma, N0, NC, rho):
    h = np.asarray(h, dtype=complex)
    nrm2 = float(np.vdot(h, h).real)
    if nrm2 == 0:
        raise ValueError("channel must be nonzero")
    return math.sqrt(required_signal(gamma, N0, NC, rho)) * h / nrm2


def f_of_b(instance: SingleUserInstance, b, c_bar) -> float:
    """SAR of the unit-signal-scaled beam a (I + b A)^{-1} h, minus the limit."""
    if b < 0:
        raise ValueError("b must be nonnegative")
    d, ht, _ = instance.eig
    p = np.abs(ht) ** 2
    inv = 1.0 / (1.0 + b * d)
    num = np.sum(p * inv**2 * d)
    den = np.sum(p * inv)
    return float(c_bar * num / den**2 - instance.sar_limit)


def beam_at(instance: SingleUserInstance, b, c_bar):
    d, ht, U = instance.eig
    x = ht / (1.0 + b * d)
    a = math.sqrt(c_bar) / float(np.vdot(ht, x).real)
    return a * (U @ x), a


def case2_solve(instance: SingleUserInstance, c_bar, b_cap=B_CAP, f_tol=F_TOL):
    """Root of f(b) = 0 by bracketing bisection; returns (w, a, b)."""
    P = instance.sar_limit
    f0 = f_of_b(instance, 0.0, c_bar)
    if f0 <= 0:
        w, a = beam_at(instance, 0.0, c_bar)
        return w, a, 0.0
    lo, hi = 0.0, B_START
    while f_of_b(instance, hi, c_bar) > 0:
        lo, hi = hi, 2 * hi
        if hi > b_cap:
            raise SarInfeasible(f"SAR limit {P} unreachable at signal power {c_bar:.3e} W")
    b = hi
    fb = f_of_b(instance, b, c_bar)
    while abs(fb) > f_tol * P or fb > 0:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f_of_b(instance, mid, c_bar)
        if fm > 0:
            lo = mid
        else:
            hi, b, fb = mid, mid, fm
    w, a = beam_at(instance, b, c_bar)
    return w, a, b


@dataclass
class SingleUserResult:
    solution: BeamformingSolution
    case: int
    b: float = 0.0

    @property
    def transmit_power(self):
        return self.solution.transmit_power


def solve_single_user(instance: SingleUserInstance) -> SingleUserResult:
    """Minimum-power beam and split meeting the SINR, harvesting and SAR targets."""
    gamma, lam = instance.sinr_target, instance.eh_input_target
    N0, NC = instance.noise_antenna, instance.noise_circuit
    rho = case1_rho(gamma, lam, N0, NC)
    w = case1_beamformer(instance.channel, gamma, N0, NC, rho)
    A = instance.sar_matrix
    if A is None or float(np.real(np.vdot(w, A @ w))) <= instance.sar_limit:
        return SingleUserResult(BeamformingSolution(w[None, :], [rho], "fast_su:case1"), 1)
    c_bar = required_signal(gamma, N0, NC, rho)
    w, _, b = case2_solve(instance, c_bar)
    return SingleUserResult(BeamformingSolution(w[None, :], [rho], "fast_su:case2"), 2, b)


def maximize_ratio_single_user(scenario, channels, eh, *, rel_tol=BISECTION_REL_TOL, t_lo=T_FLOOR) -> RatioResult:
    """Max-min ratio for one user by bisection over the fast solver."""

    def feasible_at(t):
        try:
            gamma, lam = targets_at(scenario, eh, t)
            res = solve_single_user(SingleUserInstance.from_scenario(scenario, channels, gamma, lam))
        except (SaturationExceeded, SarInfeasible):
            return None
        return res if res.transmit_power <= scenario.power_budget else None

    t_hi = max(ratio_upper_bound(scenario, channels, eh), 2 * t_lo)
    out = bisect_ratio(feasible_at, t_lo, t_hi, rel_tol)
    return RatioResult(out.t, out.witness.solution, out.iterations, out.witness)
