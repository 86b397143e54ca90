"""Scoring of candidate beamformers: SINR, harvested power, SAR, feasibility."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import ChannelSet, SystemScenario

RHO_MIN = 1e-6
RHO_MAX = 1 - 1e-6

DEFAULT_REL_TOL = 1e-6
ABS_FLOOR = 1e-12  # watts


@dataclass(frozen=True, eq=False)
class BeamformingSolution:
    """Rows of ``beamformers`` are w_k (sqrt-watts); ``splits`` are the rho_k."""

    beamformers: np.ndarray
    splits: np.ndarray
    producer: str = ""

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.beamformers, dtype=complex))
        rho = np.clip(np.array(np.broadcast_to(self.splits, (w.shape[0],)), dtype=float), RHO_MIN, RHO_MAX)
        if not np.all(np.isfinite(w)):
            raise ValueError("beamformers must be finite")
        w.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "beamformers", w)
        object.__setattr__(self, "splits", rho)

    @property
    def num_users(self):
        return self.beamformers.shape[0]

    @property
    def transmit_power(self) -> float:
        return float(np.sum(np.abs(self.beamformers) ** 2))

    def scaled(self, alpha: float, producer=None) -> "BeamformingSolution":
        """Multiply every beamformer by ``alpha`` (powers scale by alpha**2)."""
        return BeamformingSolution(alpha * self.beamformers, self.splits, producer or self.producer)

    def with_splits(self, splits, producer=None) -> "BeamformingSolution":
        return BeamformingSolution(self.beamformers, splits, producer or self.producer)


def gain_matrix(beamformers, channels) -> np.ndarray:
    """G[k, j] = |h_k^H w_j|^2."""
    H = channels.vectors if isinstance(channels, ChannelSet) else np.atleast_2d(channels)
    return np.abs(H.conj() @ np.atleast_2d(beamformers).T) ** 2


def received_power(k, solution, channels, N0) -> float:
    G = gain_matrix(solution.beamformers, channels)
    return float(np.sum(G[k]) + N0)


def sinr(k, solution, channels, N0, NC) -> float:
    G = gain_matrix(solution.beamformers, channels)
    rho = solution.splits[k]
    interference = np.sum(G[k]) - G[k, k]
    return float(rho * G[k, k] / (rho * (N0 + interference) + NC))


def harvested_power(k, solution, channels, N0, eh) -> float:
    return float(eh.forward((1 - solution.splits[k]) * received_power(k, solution, channels, N0)))


def sar_exposure(l, solution, sar_matrices) -> float:
    A = sar_matrices[l]
    W = solution.beamformers
    return float(np.real(np.einsum("ki,ij,kj->", W.conj(), A, W)))


def transmit_power(solution) -> float:
    return solution.transmit_power


def all_sinr(solution, channels, N0, NC) -> np.ndarray:
    G = gain_matrix(solution.beamformers, channels)
    rho = solution.splits
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    return rho * signal / (rho * (N0 + interference) + NC)


def all_received(solution, channels, N0) -> np.ndarray:
    return gain_matrix(solution.beamformers, channels).sum(axis=1) + N0


def all_harvested(solution, channels, N0, eh) -> np.ndarray:
    return np.asarray(eh.forward((1 - solution.splits) * all_received(solution, channels, N0)), dtype=float)


def all_sar(solution, sar_matrices) -> np.ndarray:
    return np.array([sar_exposure(l, solution, sar_matrices) for l in range(len(sar_matrices))])


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    value: float
    bound: float
    sense: str  # ">=" or "<="
    slack: float  # positive when satisfied
    satisfied: bool


@dataclass
class FeasibilityReport:
    checks: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def violations(self):
        return [c for c in self.checks if not c.satisfied]

    def __iter__(self):
        return iter(self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _check(name, value, bound, sense, tol):
    slack = value - bound if sense == ">=" else bound - value
    margin = max(tol * abs(bound), ABS_FLOOR if tol > 0 else 0.0)
    return ConstraintCheck(name, float(value), float(bound), sense, float(slack), bool(slack >= -margin))


def check_feasibility(solution, scenario: SystemScenario, channels, eh, tolerance=DEFAULT_REL_TOL,
                      ratio=1.0, include_power=True) -> FeasibilityReport:
    """Check the SINR and harvested-power targets (scaled by ``ratio``), the split
    bounds, every SAR limit and the power budget."""
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    sinrs = all_sinr(solution, channels, N0, NC)
    harvested = all_harvested(solution, channels, N0, eh)
    checks = []
    for k in range(scenario.num_users):
        checks.append(_check(f"sinr[{k}]", sinrs[k], ratio * scenario.sinr_targets[k], ">=", tolerance))
        checks.append(_check(f"eh[{k}]", harvested[k], ratio * scenario.eh_targets[k], ">=", tolerance))
        rho = solution.splits[k]
        ok = 0.0 < rho < 1.0
        checks.append(ConstraintCheck(f"rho[{k}]", float(rho), 1.0, "<=", float(min(rho, 1 - rho)), ok))
    for l, (A, P) in enumerate(zip(scenario.sar_matrices, scenario.sar_limits)):
        checks.append(_check(f"sar[{l}]", sar_exposure(l, solution, scenario.sar_matrices), P, "<=", tolerance))
    if include_power:
        checks.append(_check("power", solution.transmit_power, scenario.power_budget, "<=", tolerance))
    return FeasibilityReport(checks)


def achieved_ratio(solution, scenario, channels, eh) -> float:
    """min over users of min(SINR_k / target_k, harvested_k / target_k)."""
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    sinr_ratio = all_sinr(solution, channels, N0, NC) / scenario.sinr_targets
    eh_ratio = all_harvested(solution, channels, N0, eh) / scenario.eh_targets
    return float(min(sinr_ratio.min(), eh_ratio.min()))


def optimize_splits(beamformers, scenario, channels, eh) -> np.ndarray:
    """Per-user split maximizing min(SINR/target, harvested/target) for fixed beams.

    The SINR ratio increases in rho and the harvested ratio decreases, so the
    maximizer is where the two cross (or a bound of the admissible interval).
    """
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    G = gain_matrix(beamformers, channels)
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    received = G.sum(axis=1) + N0
    out = np.empty(len(signal))
    for k in range(len(signal)):
        def gap(rho, k=k):
            s = rho * signal[k] / (rho * (N0 + interference[k]) + NC) / scenario.sinr_targets[k]
            e = eh.forward((1 - rho) * received[k]) / scenario.eh_targets[k]
            return s - e

        lo, hi = gap(RHO_MIN), gap(RHO_MAX)
        if lo >= 0:
            out[k] = RHO_MIN
        elif hi <= 0:
            out[k] = RHO_MAX
        else:
            out[k] = brentq(gap, RHO_MIN, RHO_MAX, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return out


CSV_COLUMNS = ("ratio", "transmit_power", "min_sinr", "min_harvested", "sinr", "harvested", "sar")


@dataclass(frozen=True, eq=False)
class PerformanceReport:
    sinr: np.ndarray
    harvested: np.ndarray
    sar: np.ndarray
    transmit_power: float
    ratio: float

    def csv_row(self) -> dict:
        """One row keyed by :data:`CSV_COLUMNS`; vectors are ';'-joined."""
        join = lambda v: ";".join(repr(float(x)) for x in v)
        return {
            "ratio": repr(float(self.ratio)),
            "transmit_power": repr(float(self.transmit_power)),
            "min_sinr": repr(float(np.min(self.sinr))),
            "min_harvested": repr(float(np.min(self.harvested))),
            "sinr": join(self.sinr),
            "harvested": join(self.harvested),
            "sar": join(self.sar),
        }


def evaluate(solution, scenario, channels, eh, reoptimize_splits=False) -> PerformanceReport:
    if reoptimize_splits:
        solution = solution.with_splits(optimize_splits(solution.beamformers, scenario, channels, eh))
    N0, NC = scenario.noise_antenna, scenario.noise_circuit
    return PerformanceReport(
        sinr=all_sinr(solution, channels, N0, NC),
        harvested=all_harvested(solution, channels, N0, eh),
        sar=all_sar(solution, scenario.sar_matrices),
        transmit_power=solution.transmit_power,
        ratio=achieved_ratio(solution, scenario, channels, eh),
    )
