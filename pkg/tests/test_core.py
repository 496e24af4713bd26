import numpy as np
import pytest
from hypothesis import given, strategies as st

from nslmdp import (
    EpisodeParams,
    FeatureMap,
    LinearMdpParams,
    PolicySnapshot,
    ScheduleSpec,
    combination_lock,
    reward,
    to_tabular,
    transition_probs,
    validate,
    variation_budgets,
)
from nslmdp.core import InvalidDistribution

from oracles import naive_variation


def onehot_mdp(seed, S=4, A=3, H=3, regimes=2, schedule=None, episodes=12):
    """Small random linear MDP with one-hot features (d = S)."""
    rng = np.random.default_rng(seed)
    table = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            table[s, a, rng.integers(S)] = 1.0
    regs = []
    for _ in range(regimes):
        mu = rng.random((H, S, S))
        mu /= mu.sum(axis=2, keepdims=True)
        regs.append(EpisodeParams(rng.random((H, S)), mu))
    schedule = schedule or ScheduleSpec("abrupt_cycle", regimes, 3)
    return LinearMdpParams(FeatureMap(table), regs, schedule, episodes)


@pytest.fixture(scope="module")
def abrupt():
    return combination_lock(0, "abrupt", episodes=600)


def test_good_chain_transition(abrupt):
    p = transition_probs(abrupt, 0, 3, 0, 0)
    assert p[0] == pytest.approx(0.99) and p[1] == pytest.approx(0.01)
    assert p[2:].sum() == 0.0
    # regime 1 is active in episodes 100..199, chain 0 is now a trap
    p = transition_probs(abrupt, 150, 3, 0, 0)
    assert p[0] == pytest.approx(0.01) and p[1] == pytest.approx(0.99)


def test_point_mass_row():
    table = np.zeros((4, 1, 2))
    table[:, 0, 0] = 1.0
    mu = np.zeros((1, 2, 4))
    mu[0, 0, 3] = 1.0
    mu[0, 1, 0] = 1.0
    params = LinearMdpParams(FeatureMap(table), [EpisodeParams(np.zeros((1, 2)), mu)],
                             ScheduleSpec("stationary"), 1)
    np.testing.assert_array_equal(transition_probs(params, 0, 0, 2, 0), [0, 0, 0, 1])
    snap = to_tabular(params, 0)
    assert set(np.unique(snap.transition)) <= {0.0, 1.0}


def test_gradual_midpoint_is_average():
    grad = combination_lock(3, "gradual", episodes=300)
    ab = combination_lock(3, "abrupt", episodes=300)
    # gradual episode 49 sits halfway from regime 0 to regime 1
    assert grad.schedule.mixture(49) == ((0, 0.5), (1, 0.5))
    for s, a in [(0, 0), (1, 1), (7, 2)]:
        expect = 0.5 * (transition_probs(ab, 0, 2, s, a) + transition_probs(ab, 100, 2, s, a))
        np.testing.assert_allclose(transition_probs(grad, 49, 2, s, a), expect, atol=1e-15)
    # the (0.99, 0.01) and (0.01, 0.99) rows meet at (0.5, 0.5)
    np.testing.assert_allclose(transition_probs(grad, 49, 0, 0, 0)[:2], [0.5, 0.5])


def test_combination_lock_rewards(abrupt):
    H = abrupt.horizon
    assert reward(abrupt, 0, H - 1, 0, 0) == 1.0
    assert all(reward(abrupt, 0, h, 0, 0) == 0.0 for h in range(H - 1))
    table = abrupt.features.table
    for s in range(abrupt.num_states):
        for a in range(abrupt.num_actions):
            if table[s, a].argmax() != 0:
                assert 0.005 <= reward(abrupt, 0, 4, s, a) <= 0.008


def test_validate_clean_and_forced_violation(abrupt):
    assert validate(abrupt) == []
    table = np.zeros((2, 1, 2))
    table[0, 0, 0] = table[1, 0, 1] = 1.0
    mu = np.array([[[0.25, 0.25], [0.5, 0.5]]])
    params = LinearMdpParams(FeatureMap(table), [EpisodeParams(np.zeros((1, 2)), mu)],
                             ScheduleSpec("stationary"), 1)
    bad = validate(params)
    assert len(bad) == 1 and bad[0].kind == "InvalidDistribution" and bad[0].s == 0
    with pytest.raises(InvalidDistribution):
        transition_probs(params, 0, 0, 0, 0)


def test_stationary_repeated_is_valid():
    params = onehot_mdp(1, regimes=1, schedule=ScheduleSpec("stationary"), episodes=50)
    assert validate(params) == []
    b = variation_budgets(params)
    assert (b.b_theta, b.b_mu, b.b_total) == (0.0, 0.0, 0.0)


def test_tabular_shapes(abrupt):
    snap = to_tabular(abrupt, 0)
    assert snap.transition.shape == (10, 15, 7, 15)
    assert snap.reward.shape == (10, 15, 7)
    np.testing.assert_allclose(snap.transition.sum(axis=3), 1.0, atol=1e-12)


def test_three_four_five_variation():
    table = np.eye(2)[:, None, :]
    mu = np.tile(np.eye(2), (2, 1, 1))
    theta0 = np.zeros((2, 2))
    theta1 = theta0.copy()
    theta1[0] = [0.3, 0.4]
    regimes = [EpisodeParams(theta0, mu), EpisodeParams(theta1, mu)]
    params = LinearMdpParams(FeatureMap(table), regimes,
                             ScheduleSpec("lower_bound_intervals", 2, 1), 2)
    b = variation_budgets(params)
    assert b.b_theta == pytest.approx(0.5, abs=1e-15)
    assert b.b_mu == 0.0
    assert b.b_total == b.b_theta + b.b_mu


@given(st.integers(0, 10_000), st.sampled_from(["abrupt_cycle", "gradual_cycle", "lower_bound_intervals"]),
       st.integers(1, 5), st.integers(2, 4), st.integers(1, 30))
def test_variation_matches_double_loop(seed, kind, period, regimes, episodes):
    params = onehot_mdp(seed, regimes=regimes, schedule=ScheduleSpec(kind, regimes, period),
                        episodes=episodes)
    b = variation_budgets(params)
    bt, bm = naive_variation(params)
    assert b.b_theta == pytest.approx(bt, rel=1e-12, abs=1e-12)
    assert b.b_mu == pytest.approx(bm, rel=1e-12, abs=1e-12)
    assert b.b_total == b.b_theta + b.b_mu


@given(st.integers(0, 10_000), st.integers(0, 11))
def test_snapshot_rows_are_distributions(seed, k):
    params = onehot_mdp(seed, schedule=ScheduleSpec("gradual_cycle", 2, 4))
    snap = to_tabular(params, k)
    assert snap.transition.min() >= 0.0 and snap.transition.max() <= 1.0
    np.testing.assert_allclose(snap.transition.sum(axis=3), 1.0, atol=1e-9)
    assert validate(params) == []


@given(st.integers(0, 10_000), st.integers(0, 11))
def test_tabular_round_trip_expectations(seed, k):
    # E[g(s')] from the tabular form equals phi^T (mu g)
    params = onehot_mdp(seed, schedule=ScheduleSpec("gradual_cycle", 2, 5))
    g = np.random.default_rng(seed).random(params.num_states)
    snap = to_tabular(params, k)
    ep = params.episode(k)
    direct = np.einsum("sad,hdn,n->hsa", params.features.table, ep.mu, g)
    np.testing.assert_allclose(snap.transition @ g, direct, atol=1e-12)


def test_json_round_trip(tmp_path, abrupt):
    path = tmp_path / "env.json"
    abrupt.save_json(path)
    back = LinearMdpParams.load_json(path)
    np.testing.assert_array_equal(back.features.table, abrupt.features.table)
    for r1, r2 in zip(back.regimes, abrupt.regimes):
        np.testing.assert_array_equal(r1.theta, r2.theta)
        np.testing.assert_array_equal(r1.mu, r2.mu)
    assert back.schedule == abrupt.schedule and back.episodes == abrupt.episodes


def test_unnormalized_features_need_flag():
    with pytest.raises(ValueError, match="exceeds 1"):
        FeatureMap(np.full((1, 1, 2), 1.0))
    assert not FeatureMap(np.full((1, 1, 2), 1.0), normalized=False).normalized


def test_policy_snapshot_rows():
    with pytest.raises(ValueError):
        PolicySnapshot("stochastic", np.array([[[0.5, 0.4]]]))
    det = PolicySnapshot("deterministic", np.array([[1, 0]]))
    np.testing.assert_array_equal(det.probabilities(2), [[[0, 1], [1, 0]]])
