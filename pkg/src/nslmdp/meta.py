"""EXP3-P master over restart windows (Ada-LSVI-UCB-Restart)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import BetaPolicy, LsviUcbAgent
from .core import FeatureMap, PolicySnapshot

PRESET_COEFFS = {"theory": 5.0, "experiment": 0.2}


class DegenerateGrid(ValueError):
    pass


class InvalidGamma(ValueError):
    pass


class RewardOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class BlockPlan:
    block_length: int  # episodes per block (M)
    num_blocks: int
    window_grid: tuple  # candidate epoch sizes in time steps

    @property
    def num_arms(self) -> int:
        return len(self.window_grid)


def block_plan(T: int, d: int, H: int, coeff: float | str = 5.0) -> BlockPlan:
    """Block length ``M = ceil(coeff sqrt(T d H))`` and the geometric window grid
    ``floor(M^(l / floor(ln M))) H`` for ``l = 0 .. floor(ln M)``.

    ``coeff`` may also name a preset (``"theory"`` or ``"experiment"``).
    """
    if isinstance(coeff, str):
        coeff = PRESET_COEFFS[coeff]
    if coeff <= 0:
        raise ValueError("coeff must be positive")
    M = math.ceil(coeff * math.sqrt(T) * math.sqrt(d) * math.sqrt(H))
    log_m = math.floor(math.log(M)) if M >= 1 else 0
    if log_m < 1:
        raise DegenerateGrid(f"block length M={M} is too small for a window grid")
    grid = []
    for l in range(log_m + 1):
        w = min(math.floor(M ** (l / log_m)), M) * H
        if w not in grid:
            grid.append(w)
    num_blocks = math.ceil(T / (M * H))
    return BlockPlan(M, num_blocks, tuple(grid))


@dataclass
class Exp3pState:
    num_arms: int
    alpha: float
    beta: float
    gamma: float
    q: np.ndarray = None
    block_index: int = 0

    def __post_init__(self):
        if self.q is None:
            self.q = np.zeros(self.num_arms)


def exp3p_init(num_arms: int, num_blocks: int) -> Exp3pState:
    if num_arms < 1 or num_blocks < 1:
        raise ValueError("need at least one arm and one block")
    if num_arms == 1:
        return Exp3pState(1, 0.0, 0.0, 0.0)
    base = math.sqrt(math.log(num_arms) / (num_arms * num_blocks))
    gamma = 1.05 * base
    if gamma >= 1.0:
        raise InvalidGamma(f"gamma={gamma:.4f} >= 1 for {num_arms} arms and {num_blocks} blocks")
    return Exp3pState(num_arms, 0.95 * base, base, gamma)


def exp3p_probabilities(state: Exp3pState) -> np.ndarray:
    z = state.alpha * state.q
    z = np.exp(z - z.max())
    return (1.0 - state.gamma) * z / z.sum() + state.gamma / state.num_arms


def exp3p_update(state: Exp3pState, arm: int, block_reward: float, M: int, H: int) -> Exp3pState:
    """Every arm gains ``beta / u_l``; the played arm also gains its
    normalized block reward ``R / (M H)`` divided by ``u_arm``.
    """
    cap = M * H
    if not -1e-9 <= block_reward <= cap + 1e-9:
        raise RewardOutOfRange(f"block reward {block_reward} outside [0, {cap}]")
    u = exp3p_probabilities(state)
    gain = np.full(state.num_arms, state.beta)
    gain[arm] += block_reward / cap
    state.q = state.q + gain / u
    state.block_index += 1
    return state


class AdaLsviUcbRestart:
    """Bandit-over-bandit wrapper: each block of ``M`` episodes runs a fresh
    LSVI-UCB-Restart whose window is picked by EXP3-P.

    ``arm_log`` collects one dict per block with keys ``block, arm, window,
    block_reward, u_vector``.
    """

    kind = "ada_lsvi_ucb_restart"

    def __init__(self, features: FeatureMap, horizon: int, T: int, beta: BetaPolicy,
                 rng: np.random.Generator, coeff: float | str = 5.0, windows=None,
                 local_variation=None):
        self.features = features
        self.horizon = horizon
        self.T = T
        self.beta = beta
        self.rng = rng
        self.local_variation = local_variation
        plan = block_plan(T, features.dim, horizon, coeff)
        if windows is not None:
            plan = BlockPlan(plan.block_length, plan.num_blocks, tuple(windows))
        self.plan = plan
        self.exp3p = exp3p_init(plan.num_arms, plan.num_blocks)
        self.episodes = math.ceil(T / horizon)
        self.sub: LsviUcbAgent | None = None
        self.arm = None
        self.u = None
        self.block_reward = 0.0
        self.arm_log = []

    def begin_episode(self, k: int) -> None:
        if k % self.plan.block_length == 0 or self.sub is None:
            self.u = exp3p_probabilities(self.exp3p)
            self.arm = int(self.rng.choice(self.plan.num_arms, p=self.u))
            window = self.plan.window_grid[self.arm]
            self.sub = LsviUcbAgent(
                self.features, self.horizon, self.T, self.beta, self.rng,
                epoch_episodes=window // self.horizon,
                local_variation=self.local_variation, kind="lsvi_ucb_restart",
            )
            self.block_reward = 0.0
        self.sub.begin_episode(k)

    def policy(self) -> PolicySnapshot:
        return self.sub.policy()

    def act(self, h: int, s: int) -> int:
        return self.sub.act(h, s)

    def observe(self, h, s, a, r, s_next) -> None:
        self.block_reward += r
        self.sub.observe(h, s, a, r, s_next)

    def end_episode(self, k: int) -> None:
        if (k + 1) % self.plan.block_length == 0 or k + 1 == self.episodes:
            self.arm_log.append({
                "block": self.exp3p.block_index,
                "arm": self.arm,
                "window": self.plan.window_grid[self.arm],
                "block_reward": self.block_reward,
                "u_vector": tuple(float(x) for x in self.u),
            })
            exp3p_update(self.exp3p, self.arm, self.block_reward, self.plan.block_length, self.horizon)
            self.sub = None


def ada_run(env, T: int, coeff=5.0, beta: BetaPolicy | None = None, rng=None, windows=None):
    """Run the adaptive agent against ``env`` (a :class:`LinearMdpEnv`) for ``T`` steps.

    Returns ``(rewards, arm_log)`` with one realized episode reward per episode.
    """
    rng = np.random.default_rng() if rng is None else rng
    params = env.params
    agent = AdaLsviUcbRestart(params.features, params.horizon, T, beta or BetaPolicy(), rng,
                              coeff=coeff, windows=windows)
    rewards = []
    for k in range(math.ceil(T / params.horizon)):
        s = env.reset(k).s
        agent.begin_episode(k)
        total = 0.0
        for h in range(params.horizon):
            a = agent.act(h, s)
            s_next, r, _ = env.step(a)
            agent.observe(h, s, a, r, s_next)
            total += r
            s = s_next
        agent.end_episode(k)
        rewards.append(total)
    return np.array(rewards), agent.arm_log


def write_arm_log(arm_log, path) -> None:
    """CSV with columns ``block,arm,window,block_reward,u_vector`` (u entries joined by ``;``)."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["block", "arm", "window", "block_reward", "u_vector"])
        for row in arm_log:
            w.writerow([row["block"], row["arm"], row["window"], format(row["block_reward"], ".17g"),
                        ";".join(format(x, ".17g") for x in row["u_vector"])])
