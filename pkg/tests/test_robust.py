import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarswipt.conic import ConicProblem, solve_with_retry
from sarswipt.errors import ProblemInfeasible, RandomizationFailed
from sarswipt.metrics import all_sinr
from sarswipt.model import SystemScenario, UncertaintyModel, default_sar_matrix, generate_channels
from sarswipt.optimal import solve_p2, targets_at
from sarswipt.robust import (build_eh_lmi, build_sinr_lmi, is_robust_feasible, min_quadratic_over_ball,
                             randomize_rank1, robust_beamforming, sample_ball, sample_hermitian_ball,
                             sample_outcomes, solve_p13, worst_case_margins, worst_case_sar_margin,
                             worst_case_sar_perturbation)

from conftest import complex_vector, feasible_draws, random_psd

CH_RADIUS = 5e-8
SAR_RADIUS = 7e-8


def _unc(sc, r=CH_RADIUS, tau=SAR_RADIUS):
    return UncertaintyModel.uniform(sc.num_users, sc.num_sar, r, tau)


# -- worst-case SAR -------------------------------------------------------------

def test_margin_zero_radius_is_nominal():
    rng = np.random.default_rng(1)
    W = random_psd(rng, 4)
    A = default_sar_matrix()
    assert worst_case_sar_margin(W, A, 0.0) == pytest.approx(np.real(np.trace(A @ W)), rel=1e-14)


@pytest.mark.parametrize("tau", [0.0, 0.1, 1.0, 3.0])
def test_margin_identity_beams(tau):
    # trace(A) = 6.4 and ||I_4||_F = 2
    assert worst_case_sar_margin(np.eye(4), default_sar_matrix(), tau) == pytest.approx(6.4 + 2 * tau, rel=1e-12)


def test_margin_rejects_negative_radius():
    with pytest.raises(ValueError):
        worst_case_sar_margin(np.eye(4), default_sar_matrix(), -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_margin_bounds_sampled_errors_and_is_attained(seed):
    rng = np.random.default_rng(seed)
    W = random_psd(rng, 4, rank=2)
    A = default_sar_matrix()
    tau = rng.uniform(0.05, 2.0)
    margin = worst_case_sar_margin(W, A, tau)
    dA = sample_hermitian_ball(rng, tau, 4, 20000, boundary=True)
    sampled = np.real(np.einsum("sij,ji->s", A[None] + dA, W))
    assert sampled.max() <= margin * (1 + 1e-12)
    X = worst_case_sar_perturbation(W, tau)
    assert np.allclose(X, X.conj().T)
    assert np.linalg.norm(X, "fro") == pytest.approx(tau, rel=1e-12)
    assert np.real(np.trace((A + X) @ W)) == pytest.approx(margin, rel=1e-9)


def test_perturbation_of_zero_beams():
    assert np.all(worst_case_sar_perturbation(np.zeros((4, 4)), 1.0) == 0)


# -- worst-case quadratic over a ball ------------------------------------------

@given(st.floats(0.1, 3.0), st.floats(0.0, 5.0), st.integers(0, 10**6))
def test_min_quadratic_identity(norm_h, radius, seed):
    rng = np.random.default_rng(seed)
    h = complex_vector(rng, 4)
    h *= norm_h / np.linalg.norm(h)
    value, d = min_quadratic_over_ball(np.eye(4), h, radius)
    assert value == pytest.approx(max(norm_h - radius, 0.0) ** 2, abs=1e-10)
    assert np.linalg.norm(d) <= radius * (1 + 1e-9) + 1e-15


@given(st.floats(0.1, 3.0), st.floats(0.0, 5.0), st.integers(0, 10**6))
def test_min_quadratic_negative_identity(norm_h, radius, seed):
    rng = np.random.default_rng(seed)
    h = complex_vector(rng, 4)
    h *= norm_h / np.linalg.norm(h)
    value, _ = min_quadratic_over_ball(-np.eye(4), h, radius)
    assert value == pytest.approx(-((norm_h + radius) ** 2), rel=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_min_quadratic_indefinite_beats_samples(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    Q = G + G.conj().T
    h = complex_vector(rng, 4)
    r = rng.uniform(0.1, 1.5)
    value, d = min_quadratic_over_ball(Q, h, r)
    assert np.linalg.norm(d) <= r * (1 + 1e-9)
    assert np.real(np.vdot(h + d, Q @ (h + d))) == pytest.approx(value, rel=1e-9, abs=1e-12)
    pts = np.concatenate([sample_ball(rng, r, 4, 20000), sample_ball(rng, r, 4, 20000, boundary=True)])
    sampled = np.real(np.einsum("si,ij,sj->s", (h + pts).conj(), Q, h + pts))
    assert value <= sampled.min() + 1e-9 * max(1.0, abs(value))


def test_min_quadratic_hard_case():
    # gradient has no component along the bottom eigenvector
    Q = np.diag([-1.0, 2.0, 3.0, 4.0]).astype(complex)
    h = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)
    value, d = min_quadratic_over_ball(Q, h, 2.0)
    # at mu = 1 the component along e2 is -2/3 h2, leaving room along e1
    rest = 4.0 - (2.0 / 3.0) ** 2
    expected = -rest + 2.0 * (1 / 3) ** 2
    assert value == pytest.approx(expected, rel=1e-12)
    assert np.linalg.norm(d) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_sample_ball_radii(seed):
    rng = np.random.default_rng(seed)
    inner = np.linalg.norm(sample_ball(rng, 0.5, 4, 2000), axis=1)
    edge = np.linalg.norm(sample_ball(rng, 0.5, 4, 100, boundary=True), axis=1)
    assert inner.max() <= 0.5 + 1e-15
    assert np.allclose(edge, 0.5)
    M = sample_hermitian_ball(rng, 0.3, 4, 100, boundary=True)
    assert np.allclose(M, M.conj().transpose(0, 2, 1))
    assert np.allclose(np.linalg.norm(M, axis=(1, 2)), 0.3)


# -- S-lemma blocks --------------------------------------------------------------

def _block_feasible(block_builder):
    prob = ConicProblem("lmi")
    v = prob.variable("v", nonneg=True)
    prob.add_psd("block", block_builder(v))
    prob.minimize(v)
    return solve_with_retry(prob).ok


@pytest.mark.parametrize("seed", range(6))
def test_sinr_block_matches_exact_worst_case(seed):
    rng = np.random.default_rng(seed)
    K, Nt, gamma, noise = 2, 4, 2.0, 0.05
    h = complex_vector(rng, Nt)
    V = np.array([3 * h / np.linalg.norm(h), 0.3 * complex_vector(rng, Nt)])
    W = [np.outer(v, v.conj()) for v in V]
    Q = W[0] - gamma * W[1]
    nominal, _ = min_quadratic_over_ball(Q, h, 0.0)
    # radii at which the worst useful-minus-interference term is 10% above and below the requirement
    need = gamma * noise
    radii = np.linspace(0.0, np.linalg.norm(h), 400)[1:]
    worst = np.array([min_quadratic_over_ball(Q, h, r)[0] for r in radii])
    assert nominal > need
    easy = radii[np.argmax(worst < 1.1 * need) - 1]
    hard = radii[np.argmax(worst < 0.9 * need)]
    assert _block_feasible(lambda v: build_sinr_lmi(W, 0, h, gamma, easy, noise, 0.0, v))
    assert not _block_feasible(lambda v: build_sinr_lmi(W, 0, h, gamma, hard, noise, 0.0, v))


@pytest.mark.parametrize("seed", range(4))
def test_eh_block_matches_exact_worst_case(seed):
    rng = np.random.default_rng(seed)
    h = complex_vector(rng, 4)
    W = [random_psd(rng, 4, rank=1) for _ in range(2)]
    total = W[0] + W[1]
    r = 0.3 * np.linalg.norm(h)
    worst, _ = min_quadratic_over_ball(total, h, r)
    noise = 0.01
    for factor, expect in ((0.9, True), (1.1, False)):
        lam = factor * (worst + noise)
        assert _block_feasible(lambda v: build_eh_lmi(W, h, lam, r, noise, 1.0, v)) is expect


# -- robust SDP ------------------------------------------------------------------

@pytest.fixture(scope="module")
def draws():
    sc = SystemScenario.default()
    from sarswipt.eh import EhModel
    return sc, EhModel(), feasible_draws(sc, EhModel(), 3)


def test_zero_radius_matches_nominal(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    for _, ch, sdp in items:
        robust = solve_p13(sc, ch, _unc(sc, 0.0, 0.0), gamma, lam)
        assert robust.objective == pytest.approx(sdp.objective, rel=1e-5)
        assert np.all(robust.u == 0) and np.all(robust.v == 0)


def test_objective_grows_with_radii(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, _ = items[0]
    objs = []
    for f in (0.0, 0.5, 1.0):
        objs.append(solve_p13(sc, ch, _unc(sc, f * CH_RADIUS, f * SAR_RADIUS), gamma, lam).objective)
    assert objs[0] <= objs[1] * (1 + 1e-6)
    assert objs[1] <= objs[2] * (1 + 1e-6)
    assert objs[2] > objs[0]


def test_auxiliaries_tight_and_rank_one(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    for _, ch, _ in items:
        sol = solve_p13(sc, ch, _unc(sc), gamma, lam)
        assert sol.auxiliary_gap <= 1e-6
        assert np.all((sol.splits > 0) & (sol.splits < 1))


def test_large_radius_infeasible(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, _ = items[0]
    r = 2 * np.sqrt(np.max(ch.norms_squared()))
    with pytest.raises(ProblemInfeasible):
        solve_p13(sc, ch, _unc(sc, r, 0.0), gamma, lam)


def test_uncertainty_dimensions_checked(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    with pytest.raises(ValueError):
        solve_p13(sc, items[0][1], UncertaintyModel.uniform(sc.num_users + 1, 1, 0.0, 0.0), gamma, lam)


@pytest.mark.parametrize("index", range(2))
def test_robust_beams_survive_boundary_samples(draws, index):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, _ = items[index]
    unc = _unc(sc)
    sol, sdp = robust_beamforming(sc, ch, unc, gamma, lam)
    assert sol.transmit_power <= sc.power_budget * (1 + 1e-9)
    assert sol.transmit_power >= sdp.objective * (1 - 1e-6)
    assert is_robust_feasible(sol, sc, ch, unc, eh)
    s_slack, e_slack = worst_case_margins(sol, sc, ch, unc, eh)
    assert min(s_slack.min(), e_slack.min()) >= -1e-9
    out = sample_outcomes(sol, sc, ch, unc, eh, np.random.default_rng(7), 1000, boundary=True)
    assert out.violation_rate(sc, 1e-6) == 0.0
    assert np.all(out.sar <= np.asarray(sc.sar_limits) * (1 + 1e-9))


def test_nominal_beams_break_under_errors(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, sdp = items[0]
    from sarswipt.optimal import extract_rank1
    sol = extract_rank1(sdp)
    assert not is_robust_feasible(sol, sc, ch, _unc(sc), eh)


def test_surrogate_is_less_conservative(draws):
    # trace(A W) tau / ||A||_F <= tau ||W||_F, so the surrogate SAR row is looser
    sc, eh, items = draws
    sc = sc.with_sar_limit(0.6)
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, _ = items[0]
    unc = _unc(sc, 0.0, 0.3)
    try:
        exact = solve_p13(sc, ch, unc, gamma, lam, sar_mode="exact")
    except ProblemInfeasible:
        pytest.skip("instance infeasible at this limit")
    sur = solve_p13(sc, ch, unc, gamma, lam, sar_mode="surrogate")
    assert sur.objective <= exact.objective * (1 + 1e-6)


def test_unknown_sar_mode(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    with pytest.raises(ValueError):
        solve_p13(sc, items[0][1], _unc(sc), gamma, lam, sar_mode="loose")


# -- randomization -----------------------------------------------------------------

def test_rank_one_passthrough(draws):
    sc, eh, items = draws
    gamma, lam = targets_at(sc, eh, 1.0)
    _, ch, sdp = items[0]
    sol = randomize_rank1(sdp.matrices, sdp.splits, sc, ch, _unc(sc, 0.0, 0.0), gamma, lam)
    assert sol.producer == "robust"
    for w, W in zip(sol.beamformers, sdp.matrices):
        assert np.allclose(np.outer(w, w.conj()), W, atol=1e-6 * np.real(np.trace(W)))


def _single_user_rank_two(power_budget):
    sc = SystemScenario.default(num_users=1, power_budget=power_budget)
    ch = generate_channels(sc, 3)
    h = ch[0]
    u = complex_vector(np.random.default_rng(0), 4)
    u -= np.vdot(h, u) / np.vdot(h, h) * h
    hn, un = h / np.linalg.norm(h), u / np.linalg.norm(u)
    W = 0.05 * (np.outer(hn, hn.conj()) + np.outer(un, un.conj()))
    return sc, ch, W[None]


def test_rank_two_randomization_is_feasible(eh):
    sc, ch, mats = _single_user_rank_two(2.0)
    gamma, lam = targets_at(sc, eh, 1.0)
    unc = _unc(sc)
    sol = randomize_rank1(mats, [0.5], sc, ch, unc, gamma, lam, draws=200, rng=np.random.default_rng(1))
    assert sol.producer == "robust:randomized"
    assert is_robust_feasible(sol, sc, ch, unc, eh)
    assert all_sinr(sol, ch, sc.noise_antenna, sc.noise_circuit)[0] >= gamma[0] * (1 - 1e-9)


def test_randomization_failure_reports_gap(eh):
    sc, ch, mats = _single_user_rank_two(1e-9)
    gamma, lam = targets_at(sc, eh, 1.0)
    with pytest.raises(RandomizationFailed) as info:
        randomize_rank1(mats, [0.5], sc, ch, _unc(sc), gamma, lam, draws=50, rng=np.random.default_rng(1))
    assert info.value.best_gap > 0
    assert info.value.draws == 50
