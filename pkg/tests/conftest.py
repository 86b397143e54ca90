import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sarswipt.eh import EhModel
from sarswipt.model import SystemScenario, generate_channels
from sarswipt.optimal import solve_p2, targets_at
from sarswipt.errors import ProblemInfeasible

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def eh():
    return EhModel()


@pytest.fixture
def scenario():
    return SystemScenario.default()


def complex_vector(rng, n):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)


def random_psd(rng, n, rank=None):
    G = rng.standard_normal((n, rank or n)) + 1j * rng.standard_normal((n, rank or n))
    return G @ G.conj().T


def feasible_draws(scenario, eh, count, start=0, limit=400):
    """Seeds whose targets are reachable by the SDP at t = 1, with its solution."""
    gamma, lam = targets_at(scenario, eh, 1.0)
    out = []
    for seed in range(start, start + limit):
        ch = generate_channels(scenario, seed)
        try:
            sdp = solve_p2(scenario, ch, gamma, lam)
        except ProblemInfeasible:
            continue
        if sdp.transmit_power > scenario.power_budget:
            continue
        out.append((seed, ch, sdp))
        if len(out) == count:
            break
    return out


# Published monotonicity example: channel in the SAR eigenbasis, diagonal SAR
# matrix, signal requirement c_bar and SAR limit 1 W/kg.
CURVE_H = np.array([-1.6475 + 0.3194j, -1.0247 - 0.0921j, 0.2358 + 0.1299j, 0.2767 - 0.3367j])
CURVE_D = np.array([7.4469, 1.8896, 6.8678, 1.8351])
CURVE_C_BAR = 0.3685
