"""Walk through the combination-lock environment and its drift."""
import numpy as np

from nslmdp import LinearMdpEnv, combination_lock, optimal_values, transition_probs, variation_budgets

params = combination_lock(seed=0, schedule="abrupt", episodes=2000, period=100)
print("states, actions, dim, horizon:", params.num_states, params.num_actions, params.dim, params.horizon)

# chain 0 is the good chain for episodes 0..99, then it becomes a trap
for k in (0, 100):
    p = transition_probs(params, k, 0, 0, 0)
    print(f"episode {k}: stay on chain 0 with prob {p[0]:.2f}")

# the only big reward sits at the end of the active chain
V = optimal_values(params.snapshot(0))[0]
print("V*(s) at h=0:", np.round(V[0], 3))

b = variation_budgets(params)
print(f"variation over 2000 episodes: theta {b.b_theta:.1f}, mu {b.b_mu:.1f}, total {b.b_total:.1f}")

# a random walker rarely finds the lock
env = LinearMdpEnv(params, np.random.default_rng(1))
rng = np.random.default_rng(2)
total = 0.0
for k in range(200):
    env.reset(k)
    for h in range(params.horizon):
        _, r, _ = env.step(int(rng.integers(params.num_actions)))
        total += r
print(f"random play, 200 episodes: reward {total:.2f} vs optimal {V[0].mean() * 200:.2f} (uniform start)")
