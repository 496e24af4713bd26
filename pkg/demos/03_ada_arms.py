"""Which restart windows does the EXP3-P master pick?"""
import numpy as np

from nslmdp import AgentConfig, BetaPolicy, EnvConfig, block_plan, run_trial

T = 20000
plan = block_plan(T, 10, 10, "experiment")
print("block length", plan.block_length, "episodes; windows", plan.window_grid, "steps")

cfg = AgentConfig("ada_lsvi_ucb_restart", block_coeff=0.2, beta=BetaPolicy("experiment_scaled"))
env = EnvConfig(schedule="abrupt")
for seed in range(3):
    trace = run_trial(env.build(seed, T), cfg, T, seed)
    log = trace.metadata["arm_log"]
    print(f"seed {seed}: reward {trace.cum_reward[-1]:.0f}")
    for row in log:
        u = np.round(row["u_vector"], 2)
        print(f"  block {row['block']}: window {row['window']:5d}, block reward {row['block_reward']:6.1f}, u {u}")
