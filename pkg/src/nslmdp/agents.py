"""LSVI-UCB with periodic restarts, and the baseline agents.

All agents share one episode protocol::

    agent.begin_episode(k)        # plan (and maybe restart)
    agent.policy()                # PolicySnapshot actually executed in episode k
    a = agent.act(h, s)
    agent.observe(h, s, a, r, s_next)
    agent.end_episode(k)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FeatureMap, PolicySnapshot, VariationBudgets

AGENT_KINDS = ("lsvi_ucb", "lsvi_ucb_restart", "ada_lsvi_ucb_restart", "epsilon_greedy", "random")
BETA_MODES = ("known_variation", "unknown_variation", "experiment_scaled")


class NumericalBreakdown(ArithmeticError):
    pass


class MissingLocalVariation(ValueError):
    pass


# Gram matrices


def gram_rank_one_update(gram: np.ndarray, gram_inv: np.ndarray, phi: np.ndarray) -> None:
    """In-place ``gram += phi phi^T`` with a Sherman-Morrison update of ``gram_inv``."""
    u = gram_inv @ phi
    denom = 1.0 + phi @ u
    if not denom > 0.0:
        raise NumericalBreakdown(f"rank-one update denominator {denom!r} <= 0")
    gram += np.outer(phi, phi)
    gram_inv -= np.outer(u, u) / denom


class LsviState:
    """Per-step Gram matrices, their inverses and the transition history of
    the current epoch. ``gram[h]`` is always ``I + sum phi phi^T`` over the
    stored step-``h`` transitions.
    """

    def __init__(self, horizon: int, dim: int, capacity: int = 64):
        self.horizon = horizon
        self.dim = dim
        self.epoch_start = 0
        self._capacity = capacity
        self.reset()

    def reset(self, epoch_start: int = 0) -> None:
        H, d = self.horizon, self.dim
        self.epoch_start = epoch_start
        self.gram = np.tile(np.eye(d), (H, 1, 1))
        self.gram_inv = np.tile(np.eye(d), (H, 1, 1))
        self.weights = np.zeros((H, d))
        self.count = np.zeros(H, dtype=int)
        self.feats = np.zeros((H, self._capacity, d))
        self.rewards = np.zeros((H, self._capacity))
        self.next_states = np.zeros((H, self._capacity), dtype=int)

    def _grow(self) -> None:
        cap = self._capacity * 2
        H, d = self.horizon, self.dim
        for name, shape, dtype in (("feats", (H, cap, d), float), ("rewards", (H, cap), float),
                                   ("next_states", (H, cap), int)):
            new = np.zeros(shape, dtype=dtype)
            new[:, : self._capacity] = getattr(self, name)
            setattr(self, name, new)
        self._capacity = cap

    def add(self, h: int, phi: np.ndarray, r: float, s_next: int) -> None:
        n = self.count[h]
        if n >= self._capacity:
            self._grow()
        self.feats[h, n] = phi
        self.rewards[h, n] = r
        self.next_states[h, n] = s_next
        self.count[h] = n + 1
        gram_rank_one_update(self.gram[h], self.gram_inv[h], phi)

    def history(self, h: int):
        n = self.count[h]
        return self.feats[h, :n], self.rewards[h, :n], self.next_states[h, :n]


def lsvi_backward_pass(state: LsviState, features: FeatureMap, beta: float) -> np.ndarray:
    """Regularized least-squares value iteration with a UCB bonus.

    Sweeps ``h = H-1 .. 0``. The regression target for a stored step-``h``
    transition is ``r + max_a Q_{h+1}(s', a)`` using the ``Q_{h+1}`` built
    earlier in the same sweep (zero after the last step). Writes
    ``state.weights`` and returns ``Q`` of shape ``(H, S, A)`` with
    ``Q_h = clip(w_h . phi + beta ||phi||_{Lambda_h^-1}, 0, H)``.
    """
    H = state.horizon
    table = features.table
    Q = np.empty((H, features.num_states, features.num_actions))
    v_next = np.zeros(features.num_states)
    for h in range(H - 1, -1, -1):
        phi, r, s_next = state.history(h)
        target = r + v_next[s_next]
        w = state.gram_inv[h] @ (phi.T @ target)
        state.weights[h] = w
        q = table @ w
        if beta != 0.0:
            quad = np.einsum("sai,ij,saj->sa", table, state.gram_inv[h], table)
            q = q + beta * np.sqrt(np.maximum(quad, 0.0))
        Q[h] = np.clip(q, 0.0, H)
        v_next = Q[h].max(axis=1)
    return Q


# tuning formulas


@dataclass(frozen=True)
class BetaPolicy:
    """Bonus scale ``beta_k``.

    ``unknown_variation``: ``c d H sqrt(log(2 d T / p))``.
    ``known_variation``: ``c d H sqrt(log(2 d W / p)) + B_theta_E sqrt(d (k - tau))
    + B_mu_E H sqrt(d (k - tau))`` with the epoch's local budgets; ``use_T``
    swaps ``W`` for ``T`` inside the log.
    ``experiment_scaled``: ``scale * c d H sqrt(log(200 d T))``.
    """

    mode: str = "unknown_variation"
    c: float = 1.0
    p: float = 0.05
    scale: float = 0.001
    use_T: bool = False

    def __post_init__(self):
        if self.mode not in BETA_MODES:
            raise ValueError(f"unknown beta mode {self.mode!r}")

    def value(self, k: int, tau: int, d: int, H: int, W: int, T: int,
              local: VariationBudgets | None = None) -> float:
        if k < tau:
            raise ValueError("k must be >= tau")
        if self.mode == "experiment_scaled":
            return self.scale * self.c * d * H * math.sqrt(math.log(200 * d * T))
        if self.mode == "unknown_variation":
            return self.c * d * H * math.sqrt(math.log(2 * d * T / self.p))
        if local is None:
            raise MissingLocalVariation("known_variation beta needs the epoch's local budgets")
        horizon = T if self.use_T else W
        base = self.c * d * H * math.sqrt(math.log(2 * d * horizon / self.p))
        growth = math.sqrt(d * (k - tau))
        return base + local.b_theta * growth + local.b_mu * H * growth

    def to_dict(self) -> dict:
        return {"mode": self.mode, "c": self.c, "p": self.p, "scale": self.scale, "use_T": self.use_T}


def _clamp_window(units: float, T: int, H: int) -> int:
    episodes = math.ceil(T / H)
    return min(max(int(units), 1), episodes) * H


def epoch_size_known(B: float, T: int, d: int, H: int, scale: float = 1.0) -> int:
    """``ceil(scale B^-2/3 T^2/3 d^1/3 H^-2/3) H``, clamped to ``[H, ceil(T/H) H]``."""
    if B <= 0:
        return _clamp_window(math.inf, T, H)
    units = math.ceil(scale * B ** (-2 / 3) * T ** (2 / 3) * d ** (1 / 3) * H ** (-2 / 3))
    return _clamp_window(units, T, H)


def epoch_size_unknown(B: float, T: int, d: int, H: int, scale: float = 1.0) -> int:
    """``ceil(scale B^-1/2 T^1/2 d^1/2 H^1/2) H``, clamped to ``[H, ceil(T/H) H]``."""
    if B <= 0:
        return _clamp_window(math.inf, T, H)
    units = math.ceil(scale * B ** (-1 / 2) * math.sqrt(T * d * H))
    return _clamp_window(units, T, H)


# agents


@dataclass(frozen=True)
class AgentConfig:
    """``epoch_size`` is a window in time steps, ``"known"``/``"unknown"`` to
    derive it from the true variation budget, or ``None`` for no restarts.
    ``epoch_scale`` multiplies the derived window before rounding up.
    ``block_coeff`` sets the block length of the adaptive agent.
    """

    kind: str
    name: str | None = None
    epoch_size: int | str | None = None
    beta: BetaPolicy = field(default_factory=BetaPolicy)
    epsilon: float = 0.05
    block_coeff: float = 5.0
    epoch_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; expected one of {AGENT_KINDS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if isinstance(self.epoch_size, str) and self.epoch_size not in ("known", "unknown"):
            raise ValueError("epoch_size must be an int, 'known', 'unknown' or None")
        if self.block_coeff <= 0:
            raise ValueError("block_coeff must be positive")
        if self.epoch_scale <= 0:
            raise ValueError("epoch_scale must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "epoch_size": self.epoch_size,
            "beta": self.beta.to_dict(),
            "epsilon": self.epsilon,
            "block_coeff": self.block_coeff,
            "epoch_scale": self.epoch_scale,
        }


def greedy(values: np.ndarray) -> int:
    """Argmax with ties broken by the lowest action index."""
    return int(np.argmax(values))


class LsviUcbAgent:
    """LSVI-UCB, restarted every ``epoch_episodes`` episodes when given.

    ``epsilon > 0`` turns it into the epsilon-greedy baseline (with ``beta``
    usually zero). ``local_variation(start, stop)`` supplies per-epoch
    budgets for the known-variation bonus.
    """

    def __init__(self, features: FeatureMap, horizon: int, T: int, beta: BetaPolicy | float,
                 rng: np.random.Generator, epoch_episodes: int | None = None, epsilon: float = 0.0,
                 local_variation=None, kind: str = "lsvi_ucb"):
        self.features = features
        self.horizon = horizon
        self.T = T
        self.beta = beta
        self.rng = rng
        self.epoch_episodes = epoch_episodes
        self.epsilon = epsilon
        self.local_variation = local_variation
        self.kind = kind
        self.state = LsviState(horizon, features.dim)
        self.Q = None
        self.beta_k = None
        self.first_episode = None
        self.restarts = []

    @property
    def window(self) -> int:
        episodes = self.epoch_episodes or math.ceil(self.T / self.horizon)
        return episodes * self.horizon

    def maybe_restart(self, k: int) -> bool:
        if self.first_episode is None:
            self.first_episode = k
            self.state.reset(k)
            return False
        if self.epoch_episodes is None:
            return False
        if k > self.first_episode and (k - self.first_episode) % self.epoch_episodes == 0:
            self.state.reset(k)
            self.restarts.append(k)
            return True
        return False

    def current_beta(self, k: int) -> float:
        if not isinstance(self.beta, BetaPolicy):
            return float(self.beta)
        tau = self.state.epoch_start
        local = None
        if self.beta.mode == "known_variation":
            if self.local_variation is None:
                raise MissingLocalVariation("known_variation beta needs a local_variation source")
            local = self.local_variation(tau, tau + self.window // self.horizon)
        return self.beta.value(k, tau, self.features.dim, self.horizon, self.window, self.T, local)

    def begin_episode(self, k: int) -> None:
        self.maybe_restart(k)
        self.beta_k = self.current_beta(k)
        self.Q = lsvi_backward_pass(self.state, self.features, self.beta_k)

    def policy(self) -> PolicySnapshot:
        greedy_table = self.Q.argmax(axis=2)
        if self.epsilon == 0.0:
            return PolicySnapshot("deterministic", greedy_table)
        A = self.features.num_actions
        probs = np.full(self.Q.shape, self.epsilon / A)
        H, S = greedy_table.shape
        probs[np.arange(H)[:, None], np.arange(S)[None, :], greedy_table] += 1.0 - self.epsilon
        return PolicySnapshot("stochastic", probs)

    def act(self, h: int, s: int) -> int:
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.features.num_actions))
        return greedy(self.Q[h, s])

    def observe(self, h: int, s: int, a: int, r: float, s_next: int) -> None:
        self.state.add(h, self.features.table[s, a], r, s_next)

    def end_episode(self, k: int) -> None:
        pass


class RandomAgent:
    kind = "random"

    def __init__(self, num_states: int, num_actions: int, horizon: int, rng: np.random.Generator):
        self.num_states = num_states
        self.num_actions = num_actions
        self.horizon = horizon
        self.rng = rng
        self._policy = PolicySnapshot(
            "stochastic", np.full((horizon, num_states, num_actions), 1.0 / num_actions)
        )

    def begin_episode(self, k: int) -> None:
        pass

    def policy(self) -> PolicySnapshot:
        return self._policy

    def act(self, h: int, s: int) -> int:
        return int(self.rng.integers(self.num_actions))

    def observe(self, h, s, a, r, s_next) -> None:
        pass

    def end_episode(self, k: int) -> None:
        pass


def resolve_epoch_episodes(config: AgentConfig, T: int, d: int, H: int, total_budget=None) -> int | None:
    """Window length in episodes for a restart agent, or ``None`` for no restarts."""
    size = config.epoch_size
    if size is None:
        return None
    if isinstance(size, str):
        if total_budget is None:
            raise MissingLocalVariation(f"epoch_size={size!r} needs the true variation budget")
        fn = epoch_size_known if size == "known" else epoch_size_unknown
        size = fn(total_budget, T, d, H, config.epoch_scale)
    if size % H:
        raise ValueError(f"epoch size {size} is not a multiple of H={H}")
    return size // H


def make_agent(config: AgentConfig, features: FeatureMap, horizon: int, T: int,
               rng: np.random.Generator, total_budget=None, local_variation=None):
    """Instantiate an agent from its config.

    ``total_budget`` (true ``B``) resolves ``"known"``/``"unknown"`` epoch
    sizes; ``local_variation`` feeds the known-variation bonus.
    """
    kind = config.kind
    if kind == "random":
        return RandomAgent(features.num_states, features.num_actions, horizon, rng)
    if kind == "epsilon_greedy":
        return LsviUcbAgent(features, horizon, T, 0.0, rng, epsilon=config.epsilon, kind=kind)
    if kind == "lsvi_ucb":
        return LsviUcbAgent(features, horizon, T, config.beta, rng,
                            local_variation=local_variation, kind=kind)
    if kind == "lsvi_ucb_restart":
        episodes = resolve_epoch_episodes(config, T, features.dim, horizon, total_budget)
        return LsviUcbAgent(features, horizon, T, config.beta, rng, epoch_episodes=episodes,
                            local_variation=local_variation, kind=kind)
    from .meta import AdaLsviUcbRestart

    return AdaLsviUcbRestart(features, horizon, T, config.beta, rng, coeff=config.block_coeff,
                             local_variation=local_variation)
