"""Log-log slope of LSVI-UCB dynamic regret against T on a stationary lock.

A diagnostic only: the slope should sit below 1 (sublinear growth).
"""
import numpy as np

from nslmdp import preset, run_experiment

Ts = (5000, 10000, 20000)
regret = []
for T in Ts:
    res = run_experiment(preset("stationary").replace(T=T), jobs=1)
    regret.append(res["LSVI-UCB"].final_regrets.mean())
    print(f"T={T:6d}: mean dynamic regret {regret[-1]:.2f}")

slope = np.polyfit(np.log(Ts), np.log(regret), 1)[0]
print(f"slope of log regret vs log T: {slope:.2f}")
