import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import CURVE_C_BAR, CURVE_D, CURVE_H, complex_vector, random_psd
from sarswipt.errors import SarInfeasible
from sarswipt.fastsu import (SingleUserInstance, beam_at, case1_beamformer, case1_rho, case2_solve, f_of_b,
                             maximize_ratio_single_user, required_signal, solve_single_user)
from sarswipt.metrics import all_received, all_sinr
from sarswipt.model import ChannelSet, SystemScenario, default_sar_matrix, generate_channels
from sarswipt.optimal import maximize_ratio, solve_p2

N0, NC = 1e-10, 1e-8


def instance(h, A=None, P=np.inf, gamma=10.0, lam=1e-4):
    return SingleUserInstance(h, A, P, gamma, lam, N0, NC)


def quadratic_residual(rho, gamma, lam, N0, NC):
    a = (gamma + 1) * N0
    return (a * rho**2 - (a - gamma * NC - lam) * rho - gamma * NC) / max(a, gamma * NC, lam * rho)


def test_case1_rho_without_circuit_noise():
    gamma, lam = 3.0, 1e-10
    assert np.isclose(case1_rho(gamma, lam, N0, 0.0), 1 - lam / ((gamma + 1) * N0), rtol=1e-12)


def test_case1_rho_small_gamma_limit():
    lam = 0.4 * N0
    assert np.isclose(case1_rho(1e-12, lam, N0, NC), 1 - lam / N0, rtol=1e-6)


@given(st.floats(1e-3, 1e3), st.floats(1e-12, 1e-1), st.floats(1e-12, 1e-6), st.floats(1e-15, 1e-6))
def test_case1_rho_root(gamma, lam, n0, nc):
    rho = case1_rho(gamma, lam, n0, nc)
    assert 0 < rho <= 1
    assert abs(quadratic_residual(rho, gamma, lam, n0, nc)) <= 1e-12


def test_case1_beamformer_unit_channel():
    rng = np.random.default_rng(0)
    h = complex_vector(rng, 4)
    h /= np.linalg.norm(h)
    rho = case1_rho(10.0, 1e-4, N0, NC)
    w = case1_beamformer(h, 10.0, N0, NC, rho)
    assert np.isclose(np.linalg.norm(w) ** 2, 10.0 * (N0 + NC / rho), rtol=1e-13)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 1e3), st.floats(1e-9, 1e-2))
def test_case1_constraints_tight(seed, gamma, lam):
    h = complex_vector(np.random.default_rng(seed), 4) * 1e-2
    rho = case1_rho(gamma, lam, N0, NC)
    w = case1_beamformer(h, gamma, N0, NC, rho)
    g = abs(np.vdot(h, w)) ** 2
    assert np.isclose(g / (N0 + NC / rho), gamma, rtol=1e-10)
    assert np.isclose((1 - rho) * (g + N0), lam, rtol=1e-10)


def test_f_at_zero_identity_weighting():
    rng = np.random.default_rng(1)
    h = complex_vector(rng, 4)
    A = random_psd(rng, 4)
    inst = instance(h, A, 2.0)
    expected = 0.5 * np.vdot(h, A @ h).real / np.linalg.norm(h) ** 4 - 2.0
    assert np.isclose(f_of_b(inst, 0.0, 0.5), expected, rtol=1e-12)


def test_f_constant_for_scalar_sar_matrix():
    h = complex_vector(np.random.default_rng(2), 4)
    inst = instance(h, 3.0 * np.eye(4), 1.5)
    values = [f_of_b(inst, b, 0.7) for b in (0.0, 0.1, 10.0, 1e4)]
    assert np.allclose(values, 0.7 * 3.0 / np.linalg.norm(h) ** 2 - 1.5, rtol=1e-12)


def test_published_curve_is_monotone():
    inst = instance(CURVE_H, np.diag(CURVE_D), 1.0)
    f = np.array([f_of_b(inst, b, CURVE_C_BAR) for b in np.logspace(-4, 4, 100)])
    assert np.all(np.diff(f) <= 1e-10)


def test_published_curve_changes_sign():
    # Curve parameters taken literally: c_bar = 0.3685, P = 1 W/kg.
    inst = instance(CURVE_H, np.diag(CURVE_D), 1.0)
    assert f_of_b(inst, 0.0, CURVE_C_BAR) > 0
    assert f_of_b(inst, 10.0, CURVE_C_BAR) < 0


def test_root_on_published_channel_with_unit_signal():
    inst = instance(CURVE_H, np.diag(CURVE_D), 1.0)
    assert f_of_b(inst, 0.0, 1.0) > 0 > f_of_b(inst, 10.0, 1.0)
    w, a, b = case2_solve(inst, 1.0)
    assert 0 < b < 10
    assert abs(f_of_b(inst, b, 1.0)) <= 1e-9
    assert np.isclose(abs(np.vdot(CURVE_H, w)) ** 2, 1.0, rtol=1e-12)
    assert np.isclose(np.vdot(w, np.diag(CURVE_D) @ w).real, 1.0, rtol=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_f_monotone_random(seed):
    rng = np.random.default_rng(seed)
    inst = instance(complex_vector(rng, 4), random_psd(rng, 4, rank=rng.integers(1, 5)), 1.0)
    f = np.array([f_of_b(inst, b, 1.0) for b in np.logspace(-4, 4, 100)])
    assert np.all(np.diff(f) <= 1e-10 * max(1.0, np.abs(f).max()))


def test_scalar_sar_matrix_is_case1_or_infeasible():
    h = complex_vector(np.random.default_rng(3), 4) * 0.05
    res = solve_single_user(instance(h, np.eye(4), 1e6))
    assert res.case == 1
    with pytest.raises(SarInfeasible):
        solve_single_user(instance(h, np.eye(4), 1e-9))


def test_huge_limit_gives_case1():
    h = complex_vector(np.random.default_rng(4), 4) * 0.05
    assert solve_single_user(instance(h, default_sar_matrix(), 1e9)).case == 1


def test_constructed_case2_is_sar_tight():
    rng = np.random.default_rng(5)
    h = complex_vector(rng, 4) * 0.05
    A = default_sar_matrix()
    rho = case1_rho(10.0, 1e-4, N0, NC)
    w1 = case1_beamformer(h, 10.0, N0, NC, rho)
    P = 0.9 * np.vdot(w1, A @ w1).real
    res = solve_single_user(instance(h, A, P))
    w = res.solution.beamformers[0]
    assert res.case == 2
    assert np.isclose(np.vdot(w, A @ w).real, P, rtol=1e-6)
    ch = ChannelSet(h[None])
    assert np.isclose(all_sinr(res.solution, ch, N0, NC)[0], 10.0, rtol=1e-6)
    assert np.isclose((1 - res.solution.splits[0]) * all_received(res.solution, ch, N0)[0], 1e-4, rtol=1e-6)
    assert res.transmit_power > np.linalg.norm(w1) ** 2


def test_raising_sar_limit_never_costs_power():
    rng = np.random.default_rng(6)
    h = complex_vector(rng, 4) * 0.05
    A = default_sar_matrix()
    rho = case1_rho(10.0, 1e-4, N0, NC)
    w1 = case1_beamformer(h, 10.0, N0, NC, rho)
    base = np.vdot(w1, A @ w1).real
    powers = [solve_single_user(instance(h, A, f * base)).transmit_power for f in (0.6, 0.7, 0.8, 0.9, 1.0, 1.2)]
    assert np.all(np.diff(powers) <= 1e-12 * powers[0])


def test_beam_at_meets_signal_requirement():
    rng = np.random.default_rng(7)
    h = complex_vector(rng, 4)
    inst = instance(h, random_psd(rng, 4), 1.0)
    for b in (0.0, 0.3, 30.0):
        w, _ = beam_at(inst, b, 2.5)
        assert np.isclose(abs(np.vdot(h, w)) ** 2, 2.5, rtol=1e-12)


def test_matches_sdp_minimum_power():
    sc = SystemScenario.default(num_users=1)
    gamma, lam = np.array([10.0]), np.array([1e-4])
    for seed in range(5):
        ch = generate_channels(sc, seed)
        for P in (1.6, 0.05):
            s = sc.with_sar_limit(P)
            inst = SingleUserInstance.from_scenario(s, ch, gamma, lam)
            try:
                fast = solve_single_user(inst).transmit_power
            except SarInfeasible:
                continue
            assert np.isclose(fast, solve_p2(s, ch, gamma, lam).objective, rtol=1e-5)


def test_without_sar_matches_sdp():
    sc = SystemScenario.default(num_users=1).without_sar()
    ch = generate_channels(sc, 9)
    gamma, lam = np.array([10.0]), np.array([1e-4])
    fast = solve_single_user(SingleUserInstance.from_scenario(sc, ch, gamma, lam))
    assert fast.case == 1
    assert np.isclose(fast.transmit_power, solve_p2(sc, ch, gamma, lam).objective, rtol=1e-6)


def test_ratio_matches_sdp_and_is_faster(eh):
    sc = SystemScenario.default(num_users=1)
    t_fast = t_sdp = 0.0
    for seed in range(3):
        ch = generate_channels(sc, seed)
        t0 = time.perf_counter()
        a = maximize_ratio_single_user(sc, ch, eh)
        t1 = time.perf_counter()
        b = maximize_ratio(sc, ch, eh)
        t2 = time.perf_counter()
        t_fast += t1 - t0
        t_sdp += t2 - t1
        assert abs(a.t - b.t) <= 1e-3 * b.t
    assert t_fast <= t_sdp / 10


def test_instance_validation():
    with pytest.raises(ValueError):
        instance(np.zeros(4))
    with pytest.raises(ValueError):
        instance(np.ones(4), np.eye(3), 1.0)
    with pytest.raises(ValueError):
        instance(np.ones(4), gamma=0.0)
    with pytest.raises(ValueError):
        f_of_b(instance(np.ones(4), np.eye(4), 1.0), -1.0, 1.0)
    sc = SystemScenario.default()
    with pytest.raises(ValueError):
        SingleUserInstance.from_scenario(sc, generate_channels(sc, 0), np.ones(4), np.ones(4))


def test_required_signal():
    assert np.isclose(required_signal(10.0, N0, NC, 0.5), 10.0 * (N0 + 2 * NC))
