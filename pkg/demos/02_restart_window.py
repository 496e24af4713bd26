"""Sweep fixed restart windows on the abrupt and gradual environments.

Short windows forget too fast, long ones keep stale data; the preset's
epoch_scale moves the known-variation window into the good range.
"""
import numpy as np

from nslmdp import AgentConfig, BetaPolicy, EnvConfig, epoch_size_known, run_trial, variation_budgets

T, H, d = 20000, 10, 10
beta = BetaPolicy("experiment_scaled")
seeds = range(3)

for schedule in ("abrupt", "gradual"):
    env = EnvConfig(schedule=schedule)
    B = variation_budgets(env.build(0, T)).b_total
    print(f"{schedule}: B = {B:.0f}, known-variation window {epoch_size_known(B, T, d, H) // H} episodes "
          f"(x10: {epoch_size_known(B, T, d, H, 10) // H})")
    for episodes in (5, 20, 50, 100, 2000):
        cfg = AgentConfig("lsvi_ucb_restart", epoch_size=episodes * H, beta=beta)
        rewards = [run_trial(env.build(s, T), cfg, T, s).cum_reward[-1] for s in seeds]
        print(f"  window {episodes:5d} episodes: cum reward {np.mean(rewards):7.1f}")
