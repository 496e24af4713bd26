"""The 3-state hard instance and its nonstationary concatenation."""
import numpy as np

from nslmdp import (
    HardInstanceSpec,
    build_hard_instance,
    lower_bound_schedule,
    optimal_values,
    policy_value,
    preset,
    run_experiment,
    variation_budgets,
)
from nslmdp.core import PolicySnapshot
from nslmdp.envs import lower_bound_interval_length

spec = HardInstanceSpec(d=7, H=10, T=10240)
params = build_hard_instance(spec)
snap = params.snapshot(0)
uniform = PolicySnapshot("stochastic", np.full((10, 3, params.num_actions), 1 / params.num_actions))
print(f"{params.num_actions} actions, V* = {optimal_values(snap)[0][0, 0]:.3f}, "
      f"uniform play = {policy_value(snap, uniform, 0):.3f}")

for B in (5.0, 50.0, 500.0):
    N = lower_bound_interval_length(B, 5, 10, 2000)
    lb = lower_bound_schedule(B, 5, 10, 2000, seed=0)
    print(f"B={B:5.0f}: interval {N} episodes, measured budget {variation_budgets(lb).b_total:.2f}")

res = run_experiment(preset("lower-bound").replace(trials=3), jobs=1)
for agent in res.agents:
    print(f"{agent.label}: dynamic regret {agent.final_regrets.mean():.1f}")
