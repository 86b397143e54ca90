import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import complex_vector, feasible_draws
from sarswipt.errors import ProblemInfeasible, RankRecoveryFailed
from sarswipt.fastsu import SingleUserInstance, solve_single_user
from sarswipt.metrics import check_feasibility
from sarswipt.model import SystemScenario, generate_channels
from sarswipt.optimal import (SdpSolution, bisect_ratio, extract_rank1, maximize_ratio, ratio_upper_bound,
                              solve_p2, targets_at)


def sdp_of(matrices):
    matrices = np.asarray(matrices)
    K = len(matrices)
    return SdpSolution(matrices, np.full(K, 0.5), np.ones(K), np.ones(K), 0.0, np.zeros(K))


def test_targets_at(eh, scenario):
    gamma, lam = targets_at(scenario, eh, 0.5)
    assert np.allclose(gamma, 5.0)
    assert np.allclose(eh.forward(lam), 0.5 * scenario.eh_targets, rtol=1e-12)


@given(st.floats(0.01, 0.99))
def test_bisection_finds_threshold(threshold):
    res = bisect_ratio(lambda t: t if t <= threshold else None, 1e-3, 1.0, rel_tol=1e-6)
    assert threshold * (1 - 1e-6) <= res.t <= threshold
    assert res.witness == res.t


def test_bisection_edges():
    assert bisect_ratio(lambda t: t, 0.1, 1.0).t == 1.0
    with pytest.raises(ProblemInfeasible):
        bisect_ratio(lambda t: None, 0.1, 1.0)
    with pytest.raises(ValueError):
        bisect_ratio(lambda t: t, 1.0, 0.5)


def test_single_user_no_sar_matches_closed_form(eh):
    sc = SystemScenario.default(num_users=1).without_sar()
    ch = generate_channels(sc, 0)
    gamma, lam = targets_at(sc, eh, 1.0)
    sdp = solve_p2(sc, ch, gamma, lam)
    ref = solve_single_user(SingleUserInstance.from_scenario(sc, ch, gamma, lam))
    assert np.isclose(sdp.objective, ref.transmit_power, rtol=1e-6)


def test_huge_sar_limit_matches_no_sar(eh, scenario):
    gamma, lam = targets_at(scenario, eh, 1.0)
    for seed, ch, _ in feasible_draws(scenario, eh, 3):
        a = solve_p2(scenario.with_sar_limit(1e6), ch, gamma, lam).objective
        b = solve_p2(scenario, ch, gamma, lam, sar=False).objective
        assert np.isclose(a, b, rtol=1e-4)


def test_single_user_binding_sar_matches_fast(eh):
    sc = SystemScenario.default(num_users=1)
    gamma, lam = targets_at(sc, eh, 1.0)
    found = 0
    for seed in range(20):
        ch = generate_channels(sc, seed)
        inst = SingleUserInstance.from_scenario(sc.with_sar_limit(0.05), ch, gamma, lam)
        try:
            fast = solve_single_user(inst)
        except ProblemInfeasible:
            continue
        if fast.case != 2:
            continue
        sdp = solve_p2(sc.with_sar_limit(0.05), ch, gamma, lam)
        assert abs(sdp.objective - fast.transmit_power) <= 1e-3 * fast.transmit_power
        found += 1
    assert found > 0


def test_extract_rank1_exact():
    rng = np.random.default_rng(0)
    v = complex_vector(rng, 4)
    sol = extract_rank1(sdp_of([np.outer(v, v.conj())]))
    w = sol.beamformers[0]
    phase = np.vdot(w, v) / abs(np.vdot(w, v))
    assert np.allclose(w * phase, v, atol=1e-12)


def test_extract_rank1_rejects_full_rank():
    with pytest.raises(RankRecoveryFailed):
        extract_rank1(sdp_of([np.eye(4)]))


def test_sdp_solutions_rank_one(eh, scenario):
    for _, _, sdp in feasible_draws(scenario, eh, 5):
        assert np.max(sdp.rank_ratios) <= 1e-6
        for W in sdp.matrices:
            assert np.linalg.eigvalsh(W)[0] >= -1e-9 * np.linalg.norm(W, 2)


def test_extracted_beams_meet_targets(eh, scenario):
    for _, ch, sdp in feasible_draws(scenario, eh, 3):
        sol = extract_rank1(sdp)
        assert check_feasibility(sol, scenario, ch, eh, include_power=False).feasible
        assert np.isclose(sol.transmit_power, sdp.objective, rtol=1e-6)


def test_infeasible_raises(eh, scenario):
    ch = generate_channels(scenario, 0)
    gamma, lam = targets_at(scenario, eh, 1.0)
    with pytest.raises(ProblemInfeasible):
        solve_p2(scenario.with_sar_limit(1e-9), ch, gamma, lam)


def test_maximize_ratio_feasible_at_returned_t(eh, scenario):
    ch = generate_channels(scenario, 0)
    res = maximize_ratio(scenario, ch, eh)
    assert 0 < res.t < ratio_upper_bound(scenario, ch, eh)
    assert check_feasibility(res.solution, scenario, ch, eh, ratio=res.t).feasible


def test_ratio_monotone_in_sinr_targets(eh, scenario):
    ch = generate_channels(scenario, 1)
    a = maximize_ratio(scenario, ch, eh).t
    b = maximize_ratio(scenario.replace(sinr_targets=2 * scenario.sinr_targets), ch, eh).t
    assert b <= a * (1 + 1e-3)


def test_saturation_ceiling(eh):
    # with power and SAR effectively unlimited only the rectifier ceiling binds
    sc = SystemScenario.default(num_users=2, power_budget=1e6).with_sar_limit(1e9)
    ch = generate_channels(sc, 2)
    res = maximize_ratio(sc, ch, eh)
    assert res.t < eh.saturation / sc.eh_targets.min()


def test_ratio_upper_bound_is_never_reached(eh, scenario):
    ch = generate_channels(scenario, 3)
    assert maximize_ratio(scenario, ch, eh).t < ratio_upper_bound(scenario, ch, eh)
