import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nslmdp import (
    AdaLsviUcbRestart,
    BetaPolicy,
    LinearMdpEnv,
    LsviUcbAgent,
    ada_run,
    block_plan,
    combination_lock,
    exp3p_init,
    exp3p_probabilities,
    exp3p_update,
)
from nslmdp.meta import DegenerateGrid, Exp3pState, RewardOutOfRange, write_arm_log


def test_block_lengths():
    assert block_plan(20000, 10, 10, 0.2).block_length == 283
    assert block_plan(20000, 10, 10, 5).block_length == 7072
    assert block_plan(20000, 10, 10, "theory").block_length == 7072


def test_experiment_grid():
    plan = block_plan(20000, 10, 10, "experiment")
    assert plan.window_grid == (10, 30, 90, 290, 910, 2830)
    assert plan.num_arms == 6 and plan.num_blocks == 8


@given(st.integers(10, 10**6), st.integers(1, 20), st.integers(1, 20), st.floats(0.1, 10))
def test_grid_entries(T, d, H, coeff):
    if math.ceil(coeff * math.sqrt(T * d * H)) < 3:
        with pytest.raises(DegenerateGrid):
            block_plan(T, d, H, coeff)
        return
    plan = block_plan(T, d, H, coeff)
    M = plan.block_length
    assert all(w % H == 0 and H <= w <= M * H for w in plan.window_grid)
    assert len(set(plan.window_grid)) == plan.num_arms
    assert plan.window_grid[0] == H and plan.window_grid[-1] == M * H


def test_exp3p_constants():
    state = exp3p_init(6, 8)
    assert state.alpha == pytest.approx(0.95 * math.sqrt(math.log(6) / 48))
    assert state.alpha == pytest.approx(0.18352, abs=1e-4)
    two = exp3p_init(2, 1)
    assert two.gamma == pytest.approx(0.618, abs=1e-3) and two.gamma < 1


def test_probabilities_examples():
    state = exp3p_init(5, 10)
    np.testing.assert_allclose(exp3p_probabilities(state), 0.2, atol=1e-15)
    state.q = np.array([1e6, 0, 0, 0, 0])
    u = exp3p_probabilities(state)
    assert u[0] == pytest.approx(1 - state.gamma + state.gamma / 5)
    np.testing.assert_allclose(u[1:], state.gamma / 5)
    hand = Exp3pState(3, alpha=0.5, beta=0.1, gamma=0.3, q=np.array([1.0, 0, 0]))
    soft = np.exp([0.5, 0, 0]) / (math.exp(0.5) + 2)
    np.testing.assert_allclose(exp3p_probabilities(hand), 0.7 * soft + 0.1, atol=1e-15)
    np.testing.assert_allclose(exp3p_probabilities(hand), [0.41597, 0.29201, 0.29201], atol=1e-3)


def test_update_examples():
    four = Exp3pState(4, alpha=0.1, beta=0.1, gamma=0.2)
    exp3p_update(four, 0, 50.0, 10, 10)
    assert four.q[1] == pytest.approx(0.4)
    two = Exp3pState(2, alpha=0.1, beta=0.1, gamma=0.2)
    exp3p_update(two, 0, 100.0, 10, 10)
    assert two.q[0] == pytest.approx(2.2) and two.q[1] == pytest.approx(0.2)
    zero = Exp3pState(2, alpha=0.1, beta=0.1, gamma=0.2)
    exp3p_update(zero, 1, 0.0, 10, 10)
    assert zero.q[0] == zero.q[1] and zero.block_index == 1
    with pytest.raises(RewardOutOfRange):
        exp3p_update(zero, 0, 101.0, 10, 10)


@given(st.integers(2, 12), st.integers(1, 300), st.integers(0, 2**31 - 1))
def test_exp3p_invariants(arms, blocks, seed):
    rng = np.random.default_rng(seed)
    state = exp3p_init(arms, blocks)
    for _ in range(min(blocks, 60)):
        u = exp3p_probabilities(state)
        assert abs(u.sum() - 1.0) <= 1e-12
        assert u.min() >= state.gamma / arms - 1e-12
        before = state.q.copy()
        arm = int(rng.choice(arms, p=u))
        exp3p_update(state, arm, float(rng.uniform(0, 100)), 10, 10)
        assert np.all(state.q >= before)
    shifted = Exp3pState(arms, state.alpha, state.beta, state.gamma, state.q + 123.0)
    np.testing.assert_allclose(exp3p_probabilities(shifted), exp3p_probabilities(state), atol=1e-12)


def test_adversarial_two_arms():
    state = exp3p_init(2, 200)
    rng = np.random.default_rng(0)
    picks = []
    for _ in range(200):
        arm = int(rng.choice(2, p=exp3p_probabilities(state)))
        picks.append(arm)
        exp3p_update(state, arm, 100.0 if arm == 0 else 0.0, 10, 10)
    assert np.mean(np.array(picks[100:]) == 0) >= 1 - state.gamma - 0.1


def test_single_window_equals_restart():
    # M = 90 episodes for T=2000; a 30-episode window divides it, so the
    # fresh agent per block restarts exactly when the plain agent would
    T = 2000
    params = combination_lock(0, "abrupt", episodes=200)
    beta = BetaPolicy("experiment_scaled")
    ada_rewards, log = ada_run(LinearMdpEnv(params, np.random.default_rng(4)), T, 0.2, beta,
                               np.random.default_rng(5), windows=[300])
    assert {row["window"] for row in log} == {300}
    agent = LsviUcbAgent(params.features, 10, T, beta, np.random.default_rng(5), epoch_episodes=30)
    env = LinearMdpEnv(params, np.random.default_rng(4))
    plain = []
    for k in range(200):
        s = env.reset(k).s
        agent.begin_episode(k)
        total = 0.0
        for h in range(10):
            a = agent.act(h, s)
            nxt, r, _ = env.step(a)
            agent.observe(h, s, a, r, nxt)
            total += r
            s = nxt
        plain.append(total)
    np.testing.assert_array_equal(ada_rewards, plain)


def test_ada_rerun_is_identical():
    params = combination_lock(1, "abrupt", episodes=300)
    runs = [ada_run(LinearMdpEnv(params, np.random.default_rng(2)), 3000, 0.2,
                    BetaPolicy("experiment_scaled"), np.random.default_rng(3)) for _ in range(2)]
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    assert [r["arm"] for r in runs[0][1]] == [r["arm"] for r in runs[1][1]]
    for row in runs[0][1]:
        M = block_plan(3000, 10, 10, 0.2).block_length
        assert 0.0 <= row["block_reward"] / (M * 10) <= 1.0


def test_fresh_agent_per_block():
    params = combination_lock(2, "abrupt", episodes=300)
    agent = AdaLsviUcbRestart(params.features, 10, 3000, BetaPolicy("experiment_scaled"),
                              np.random.default_rng(0), coeff=0.2)
    M = agent.plan.block_length
    env = LinearMdpEnv(params, np.random.default_rng(1))
    for k in range(300):
        s = env.reset(k).s
        agent.begin_episode(k)
        if k % M == 0:
            assert agent.sub.state.count.sum() == 0
            np.testing.assert_array_equal(agent.sub.state.gram, np.tile(np.eye(10), (10, 1, 1)))
        for h in range(10):
            a = agent.act(h, s)
            nxt, r, _ = env.step(a)
            agent.observe(h, s, a, r, nxt)
            s = nxt
        agent.end_episode(k)
    assert len(agent.arm_log) == math.ceil(300 / M)


def test_arm_log_csv(tmp_path):
    log = [{"block": 0, "arm": 2, "window": 90, "block_reward": 12.5, "u_vector": (0.25, 0.75)}]
    write_arm_log(log, tmp_path / "arms.csv")
    with open(tmp_path / "arms.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["block", "arm", "window", "block_reward", "u_vector"]
    assert rows[1] == ["0", "2", "90", "12.5", "0.25;0.75"]
