import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import complex_vector
from sarswipt.errors import DegenerateChannel, ProblemInfeasible
from sarswipt.fastsu import SingleUserInstance, solve_single_user
from sarswipt.fixedbf import (FixedDirections, maximize_ratio_fixed, mrt_directions, rzf_directions, solve_p6,
                              solve_p7, zf_directions)
from sarswipt.metrics import all_harvested, all_sinr, check_feasibility
from sarswipt.model import ChannelSet, SystemScenario, default_sar_matrix, generate_channels
from sarswipt.optimal import maximize_ratio, targets_at


def random_channels(seed, K=4, Nt=4):
    rng = np.random.default_rng(seed)
    return ChannelSet(np.array([complex_vector(rng, Nt) for _ in range(K)]))


def test_mrt_examples():
    e1 = np.array([1.0, 0, 0, 0], dtype=complex)
    assert np.allclose(mrt_directions(ChannelSet(e1[None])).vectors[0], e1)
    ch = random_channels(0)
    d = mrt_directions(ch)
    assert np.allclose(np.diag(d.gains), ch.norms_squared(), rtol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_mrt_strictly_beats_other_unit_vectors(seed):
    rng = np.random.default_rng(seed)
    h = complex_vector(rng, 4)
    v = complex_vector(rng, 4)
    v /= np.linalg.norm(v)
    assert abs(np.vdot(h, v)) ** 2 < np.linalg.norm(h) ** 2


def test_zf_single_user_is_mrt():
    ch = random_channels(1, K=1)
    assert np.allclose(zf_directions(ch).vectors, mrt_directions(ch).vectors)


def test_zf_orthogonal_channels():
    H = np.diag([1.0, 2.0, 0.5]).astype(complex) * np.exp(1j * np.array([0.1, 0.7, 2.0]))[:, None]
    ch = ChannelSet(H)
    expected = H / np.linalg.norm(H, axis=1)[:, None]
    assert np.allclose(zf_directions(ch).vectors, expected)


@given(st.integers(0, 2**32 - 1))
def test_zf_nulls_interference(seed):
    ch = random_channels(seed)
    V = zf_directions(ch).vectors
    H = ch.vectors
    for k in range(4):
        for j in range(4):
            if j != k:
                assert abs(np.vdot(H[j], V[k])) <= 1e-9 * np.linalg.norm(H[j])


def test_zf_degenerate():
    H = np.ones((2, 2), dtype=complex)
    with pytest.raises(DegenerateChannel):
        zf_directions(ChannelSet(H))
    with pytest.raises(DegenerateChannel):
        zf_directions(random_channels(2, K=5, Nt=4))


def test_rzf_limits():
    h = complex_vector(np.random.default_rng(3), 4)
    ch = ChannelSet(h[None])
    assert np.isclose(abs(np.vdot(rzf_directions(ch).vectors[0], h / np.linalg.norm(h))), 1.0)
    # many users: K I dominates and the direction approaches MRT
    H = np.array([complex_vector(np.random.default_rng(4), 4) for _ in range(200)]) * 1e-4
    d = rzf_directions(ChannelSet(H))
    m = mrt_directions(ChannelSet(H))
    assert np.min(np.abs(np.einsum("ki,ki->k", d.vectors.conj(), m.vectors))) > 1 - 1e-6


def test_rzf_large_sar_matrix_reduces_radiation():
    rng = np.random.default_rng(55)
    ch = random_channels(5)
    h = ch.vectors[0]
    # a rank-one SAR matrix along a direction correlated with h, but not parallel
    # to it (a matrix parallel to h leaves the direction unchanged)
    u = h / np.linalg.norm(h) + complex_vector(rng, 4) / 2
    u /= np.linalg.norm(u)
    A = 50.0 * np.outer(u, u.conj())
    before = rzf_directions(ch, [np.zeros((4, 4))]).vectors[0]
    after = rzf_directions(ch, [A]).vectors[0]
    F = lambda v: np.vdot(v, A @ v).real
    assert F(after) < F(before)


def test_directions_are_unit_and_gains_nonnegative():
    ch = random_channels(6)
    for d in (mrt_directions(ch, [default_sar_matrix()]), zf_directions(ch, [default_sar_matrix()]),
              rzf_directions(ch, [default_sar_matrix()])):
        assert np.allclose(np.linalg.norm(d.vectors, axis=1), 1, atol=1e-12)
        assert np.all(d.gains >= 0) and np.all(d.radiation >= 0)
    with pytest.raises(ValueError):
        FixedDirections.build(np.ones((1, 4)), ch, ())


def single_user_scenario(**kw):
    return SystemScenario.default(num_users=1, **kw)


def test_p6_single_user_mrt_matches_case1(eh):
    sc = single_user_scenario().without_sar()
    ch = generate_channels(sc, 3)
    gamma, lam = targets_at(sc, eh, 1.0)
    alloc = solve_p6(mrt_directions(ch), sc, ch, gamma, lam)
    ref = solve_single_user(SingleUserInstance.from_scenario(sc, ch, gamma, lam))
    assert np.isclose(alloc.objective, ref.transmit_power, rtol=1e-6)


def test_p6_zero_targets():
    sc = SystemScenario.default()
    ch = generate_channels(sc, 0)
    alloc = solve_p6(zf_directions(ch, sc.sar_matrices), sc, ch, np.zeros(4), np.zeros(4))
    assert alloc.objective <= 1e-8


def test_p6_binding_sar_row(eh):
    sc = SystemScenario.default()
    gamma, lam = targets_at(sc, eh, 0.1)
    checked = 0
    for seed in range(10):
        ch = generate_channels(sc, seed)
        # interference also feeds the harvesters, so powers can trade against SAR
        d = rzf_directions(ch, sc.sar_matrices)
        try:
            free = solve_p6(d, sc.without_sar(), ch, gamma, lam)
            limit = 0.99 * (d.radiation[:, 0] @ free.powers)
            alloc = solve_p6(d, sc.with_sar_limit(limit), ch, gamma, lam)
        except ProblemInfeasible:
            continue
        assert np.isclose(d.radiation[:, 0] @ alloc.powers, limit, rtol=1e-6)
        assert alloc.objective >= free.objective * (1 - 1e-9)
        checked += 1
    assert checked > 0


def test_p7_matches_p6(eh):
    sc = SystemScenario.default().with_sar_limit(100.0)
    gamma, lam = targets_at(sc, eh, 1.0)
    for seed in range(10):
        ch = generate_channels(sc, seed)
        d = zf_directions(ch, sc.sar_matrices)
        a, b = solve_p6(d, sc, ch, gamma, lam), solve_p7(d, sc, gamma, lam)
        assert abs(a.objective - b.objective) <= 1e-6 * b.objective


def test_p7_constraints_tight_per_user(eh):
    sc = SystemScenario.default().without_sar()
    ch = generate_channels(sc, 2)
    gamma, lam = targets_at(sc, eh, 1.0)
    d = zf_directions(ch)
    alloc = solve_p7(d, sc, gamma, lam)
    sol = d.solution(alloc.powers, alloc.splits)
    assert np.allclose(all_sinr(sol, ch, sc.noise_antenna, sc.noise_circuit), gamma, rtol=1e-9)
    assert np.allclose(all_harvested(sol, ch, sc.noise_antenna, eh), sc.eh_targets, rtol=1e-9)


def test_p7_zero_gain_infeasible():
    sc = SystemScenario.default(num_users=2)
    d = FixedDirections(np.eye(2, 4, dtype=complex), np.zeros((2, 2)), np.zeros((2, 1)), "zf")
    with pytest.raises(ProblemInfeasible):
        solve_p7(d, sc, np.ones(2), np.full(2, 1e-4))


def test_p7_rejects_interfering_directions(eh):
    sc = SystemScenario.default()
    ch = generate_channels(sc, 1)
    with pytest.raises(ValueError):
        solve_p7(mrt_directions(ch), sc, *targets_at(sc, eh, 1.0))


def test_fixed_ratio_bounded_by_optimal(eh):
    sc = SystemScenario.default()
    ch = generate_channels(sc, 1)
    opt = maximize_ratio(sc, ch, eh)
    for builder in (zf_directions, rzf_directions, mrt_directions):
        res = maximize_ratio_fixed(builder(ch, sc.sar_matrices), sc, ch, eh)
        assert res.t <= opt.t * (1 + 2e-3)
        assert check_feasibility(res.solution, sc, ch, eh, ratio=res.t).feasible


def test_zf_closed_form_and_conic_paths_agree(eh):
    sc = SystemScenario.default()
    ch = generate_channels(sc, 4)
    d = zf_directions(ch, sc.sar_matrices)
    a = maximize_ratio_fixed(d, sc, ch, eh)
    b = maximize_ratio_fixed(d, sc, ch, eh, closed_form_zf=False)
    assert abs(a.t - b.t) <= 2e-3 * max(a.t, b.t)
