"""Exact planning, dynamic-regret accounting and multi-trial experiments."""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentConfig, make_agent
from .core import LinearMdpParams, PolicySnapshot, TabularSnapshot, variation_budgets
from .envs import LinearMdpEnv

# substream keys under each trial seed
ENV_BUILD, ENV_SAMPLING, AGENT_STREAM = 0, 1, 2

CURVE_HEADER = ["episode", "mean_cum_reward", "std_cum_reward", "mean_cum_regret", "std_cum_regret"]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def substream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


# planning


def optimal_values(snapshot: TabularSnapshot):
    """Backward induction. Returns ``(V, Q, policy)`` where ``V`` is
    ``(H+1, S)`` with ``V[H] = 0``, ``Q`` is ``(H, S, A)`` and ``policy`` is the
    greedy optimal action table ``(H, S)`` (lowest index wins ties).
    """
    H, S, A = snapshot.reward.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = snapshot.reward[h] + snapshot.transition[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return V, Q, Q.argmax(axis=2)


def policy_values(snapshot: TabularSnapshot, policy: PolicySnapshot) -> np.ndarray:
    """Exact ``V^pi`` table of shape ``(H+1, S)``."""
    H, S, A = snapshot.reward.shape
    V = np.zeros((H + 1, S))
    if policy.kind == "deterministic":
        # same arithmetic as optimal_values, so the greedy optimal policy
        # reproduces V* bit for bit
        rows = np.arange(S)
        for h in range(H - 1, -1, -1):
            q = snapshot.reward[h] + snapshot.transition[h] @ V[h + 1]
            V[h] = q[rows, policy.table[h]]
    else:
        probs = np.asarray(policy.table)
        for h in range(H - 1, -1, -1):
            q = snapshot.reward[h] + snapshot.transition[h] @ V[h + 1]
            V[h] = (probs[h] * q).sum(axis=1)
    return V


def policy_value(snapshot: TabularSnapshot, policy: PolicySnapshot, s1: int) -> float:
    return float(policy_values(snapshot, policy)[0, s1])


# trials


@dataclass
class RegretTrace:
    v_star: np.ndarray
    v_pi: np.ndarray
    realized_reward: np.ndarray
    initial_states: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return len(self.v_star)

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.v_star - self.v_pi)

    @property
    def cum_reward(self) -> np.ndarray:
        return np.cumsum(self.realized_reward)

    @property
    def dynamic_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.episodes else 0.0

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "v_star": self.v_star.tolist(),
            "v_pi": self.v_pi.tolist(),
            "realized_reward": self.realized_reward.tolist(),
            "initial_states": self.initial_states.tolist(),
        }


class TrialFailed(RuntimeError):
    def __init__(self, message, trace: RegretTrace):
        super().__init__(message)
        self.trace = trace


class OracleAgent:
    """Plays the exact optimal policy of every episode (test reference)."""

    kind = "oracle"

    def __init__(self, params: LinearMdpParams):
        self.params = params
        self._table = None

    def begin_episode(self, k):
        self._table = optimal_values(self.params.snapshot(k))[2]

    def policy(self):
        return PolicySnapshot("deterministic", self._table)

    def act(self, h, s):
        return int(self._table[h, s])

    def observe(self, h, s, a, r, s_next):
        pass

    def end_episode(self, k):
        pass


def run_agent(params: LinearMdpParams, agent, env: LinearMdpEnv, episodes: int | None = None,
              metadata=None) -> RegretTrace:
    """Run ``agent`` for ``episodes`` episodes recording exact values and realized rewards."""
    K = params.episodes if episodes is None else episodes
    H = params.horizon
    v_star = np.zeros(K)
    v_pi = np.zeros(K)
    realized = np.zeros(K)
    starts = np.zeros(K, dtype=int)
    star_cache: dict = {}
    k = 0
    try:
        for k in range(K):
            s = env.reset(k).s
            starts[k] = s
            agent.begin_episode(k)
            snap = params.snapshot(k)
            key = params.episode_key(k)
            if key not in star_cache:
                star_cache[key] = optimal_values(snap)[0][0]
            v_star[k] = star_cache[key][s]
            v_pi[k] = policy_value(snap, agent.policy(), s)
            total = 0.0
            for h in range(H):
                a = agent.act(h, s)
                s_next, r, _ = env.step(a)
                agent.observe(h, s, a, r, s_next)
                total += r
                s = s_next
            realized[k] = total
            agent.end_episode(k)
    except Exception as exc:
        partial = RegretTrace(v_star[:k], v_pi[:k], realized[:k], starts[:k], dict(metadata or {}))
        raise TrialFailed(f"trial aborted at episode {k}: {exc!r}", partial) from exc
    return RegretTrace(v_star, v_pi, realized, starts, dict(metadata or {}))


def run_trial(params: LinearMdpParams, config: AgentConfig, T: int, seed: int,
              initial_state="uniform") -> RegretTrace:
    """One trial of one agent. ``T`` is in time steps (``K = T / H``)."""
    H = params.horizon
    K = T // H
    env = LinearMdpEnv(params, substream(seed, ENV_SAMPLING), initial_state)
    budget = variation_budgets(params, 0, K)

    def local(start, stop):
        return variation_budgets(params, start, min(stop, K))

    agent = make_agent(config, params.features, H, T, substream(seed, AGENT_STREAM),
                       total_budget=budget.b_total, local_variation=local)
    meta = {"agent": config.label, "kind": config.kind, "seed": seed}
    trace = run_agent(params, agent, env, K, meta)
    if hasattr(agent, "arm_log"):
        trace.metadata["arm_log"] = agent.arm_log
    if getattr(agent, "epoch_episodes", None):
        trace.metadata["epoch_episodes"] = agent.epoch_episodes
    return trace


# experiments


@dataclass
class AgentResult:
    label: str
    traces: list

    def _stack(self, attr):
        return np.stack([getattr(t, attr) for t in self.traces])

    @staticmethod
    def _mean_std(x):
        std = x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1])
        return x.mean(axis=0), std

    @property
    def cum_reward(self):
        return self._mean_std(self._stack("cum_reward"))

    @property
    def cum_regret(self):
        return self._mean_std(self._stack("cum_regret"))

    @property
    def final_rewards(self) -> np.ndarray:
        return np.array([t.cum_reward[-1] for t in self.traces])

    @property
    def final_regrets(self) -> np.ndarray:
        return np.array([t.cum_regret[-1] for t in self.traces])

    @property
    def runtimes(self) -> np.ndarray:
        return np.array([t.metadata.get("seconds", 0.0) for t in self.traces])


@dataclass
class ExperimentResult:
    name: str
    agents: list  # of AgentResult, in config order

    def __getitem__(self, label) -> AgentResult:
        for a in self.agents:
            if a.label == label:
                return a
        raise KeyError(label)


def _trial_task(args):
    env_cfg, agent_cfg, T, seed, initial_state = args
    params = env_cfg.build(seed, T)
    start = time.perf_counter()
    trace = run_trial(params, agent_cfg, T, seed, initial_state)
    trace.metadata["seconds"] = time.perf_counter() - start
    return trace


def run_experiment(config, jobs: int | None = None) -> ExperimentResult:
    """Run every agent for ``config.trials`` trials with seeds ``base_seed + i``.

    Trials may run in worker processes; results are merged by (agent, trial)
    index so the outcome does not depend on ``jobs``.
    """
    if config.trials < 1:
        raise ValueError("need at least one trial")
    tasks = [
        (config.env, agent, config.T, config.base_seed + i, config.initial_state)
        for agent in config.agents
        for i in range(config.trials)
    ]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_trial_task, tasks))
    else:
        traces = [_trial_task(t) for t in tasks]
    n = config.trials
    results = [
        AgentResult(agent.label, traces[i * n:(i + 1) * n]) for i, agent in enumerate(config.agents)
    ]
    return ExperimentResult(config.name, results)


def export_csv(results: ExperimentResult, path, traces_json: bool = False) -> list:
    """Write one curve CSV per agent, ``summary.csv`` and ``runtime.json``.

    CSV floats use 17 significant digits, so identical runs give identical
    bytes; wall-clock timings live only in ``runtime.json``.
    """
    if not results.agents:
        raise ValueError("no results to export")
    try:
        os.makedirs(path, exist_ok=True)
        written = []
        for agent in results.agents:
            mr, sr = agent.cum_reward
            mg, sg = agent.cum_regret
            fname = os.path.join(path, f"{agent.label}.csv")
            with open(fname, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(CURVE_HEADER)
                for k in range(len(mr)):
                    w.writerow([k + 1, fmt(mr[k]), fmt(sr[k]), fmt(mg[k]), fmt(sg[k])])
            written.append(fname)
        fname = os.path.join(path, "summary.csv")
        with open(fname, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["agent", "trials", "mean_final_cum_reward", "std_final_cum_reward",
                        "mean_final_cum_regret", "std_final_cum_regret"])
            for agent in results.agents:
                mr, sr = agent.cum_reward
                mg, sg = agent.cum_regret
                w.writerow([agent.label, len(agent.traces), fmt(mr[-1]), fmt(sr[-1]), fmt(mg[-1]), fmt(sg[-1])])
        written.append(fname)
        fname = os.path.join(path, "runtime.json")
        with open(fname, "w") as f:
            json.dump({
                "experiment": results.name,
                "agents": {
                    a.label: {
                        "mean_seconds": float(a.runtimes.mean()),
                        "std_seconds": float(a.runtimes.std(ddof=1)) if len(a.traces) > 1 else 0.0,
                    }
                    for a in results.agents
                },
            }, f, indent=2)
        written.append(fname)
        for agent in results.agents:
            logs = [t.metadata.get("arm_log") for t in agent.traces]
            if any(logs):
                fname = os.path.join(path, f"{agent.label}.arms.csv")
                with open(fname, "w", newline="") as f:
                    w = csv.writer(f, lineterminator="\n")
                    w.writerow(["trial", "block", "arm", "window", "block_reward", "u_vector"])
                    for i, log in enumerate(logs):
                        for row in log or []:
                            w.writerow([i, row["block"], row["arm"], row["window"], fmt(row["block_reward"]),
                                        ";".join(fmt(x) for x in row["u_vector"])])
                written.append(fname)
        if traces_json:
            fname = os.path.join(path, "traces.json")
            with open(fname, "w") as f:
                json.dump({a.label: [t.to_dict() for t in a.traces] for a in results.agents}, f)
            written.append(fname)
    except OSError as exc:
        raise OSError(f"failed writing results to {path}: {exc}") from exc
    return written
