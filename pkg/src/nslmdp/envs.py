"""Environment generators and the episodic interaction loop."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    EpisodeParams,
    FeatureMap,
    LinearMdpParams,
    ScheduleSpec,
    validate,
)

HARD_DELTA = 0.25
MAX_HARD_SIGN_DIM = 12


class ConstructionInvalid(ValueError):
    pass


class PreconditionViolated(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


# combination lock


def build_combination_lock(seed, S=15, A=7, H=10, d=10, num_chains=5):
    """One-hot combination-lock features and one parameter set per good chain.

    Chain ``i < num_chains`` is "special": ``phi(s_i, a_i) = e_i`` while every
    other action at ``s_i`` maps to a random ``e_n`` with ``n != i``. States
    ``s_i`` with ``i >= num_chains`` map every action to a random ``e_n``.

    In regime ``g`` only chain ``g`` is connected: feature ``e_g`` keeps the
    agent on ``s_g`` with probability 0.99 and pays reward 1 on the last step
    only, while every other feature pays a small reward drawn from
    ``[0.005, 0.008]`` at every step. Normal feature rows send mass 0.8/0.2
    to two random states. All draws are made once per regime and step.

    Returns ``(features, regimes)``.
    """
    if not num_chains <= min(A, d) or num_chains + 1 > S:
        raise ConstructionInvalid(
            f"num_chains={num_chains} needs num_chains <= min(A, d) and num_chains < S"
        )
    rng = np.random.default_rng(seed)
    table = np.zeros((S, A, d))
    for i in range(S):
        for j in range(A):
            if i < num_chains and j == i:
                n = i
            elif i < num_chains:
                n = rng.choice([m for m in range(d) if m != i])
            else:
                n = rng.integers(d)
            table[i, j, n] = 1.0
    features = FeatureMap(table)

    regimes = []
    for g in range(num_chains):
        mu = np.zeros((H, d, S))
        theta = np.empty((H, d))
        for h in range(H):
            for c in range(num_chains):
                if c == g:
                    mu[h, c, c], mu[h, c, c + 1] = 0.99, 0.01
                else:
                    mu[h, c, c], mu[h, c, c + 1] = 0.01, 0.99
            for i in range(num_chains, d):
                n1, n2 = rng.choice(S, size=2, replace=False)
                mu[h, i, n1], mu[h, i, n2] = 0.8, 0.2
            theta[h] = rng.uniform(0.005, 0.008, size=d)
            theta[h, g] = 1.0 if h == H - 1 else 0.0
        regimes.append(EpisodeParams(theta, mu))

    for g, regime in enumerate(regimes):
        probe = LinearMdpParams(features, [regime], ScheduleSpec("stationary"), 1)
        bad = validate(probe)
        if bad:
            raise ConstructionInvalid(f"regime {g}: {bad[0]}")
    return features, regimes


def stationary_schedule() -> ScheduleSpec:
    return ScheduleSpec("stationary")


def abrupt_schedule(num_regimes: int, period: int = 100) -> ScheduleSpec:
    """Cycle through the regimes in order, switching every ``period`` episodes."""
    if num_regimes == 1:
        return ScheduleSpec("stationary")
    return ScheduleSpec("abrupt_cycle", num_regimes, period)


def gradual_schedule(num_regimes: int, period: int = 100) -> ScheduleSpec:
    """Linearly interpolate from one regime to the next within every period."""
    return ScheduleSpec("gradual_cycle", num_regimes, period)


def combination_lock(seed, schedule="abrupt", episodes=2000, period=100, S=15, A=7, H=10, d=10,
                     num_chains=5) -> LinearMdpParams:
    """Convenience wrapper: build the regimes and attach a schedule by name."""
    features, regimes = build_combination_lock(seed, S, A, H, d, num_chains)
    if schedule == "abrupt":
        spec = abrupt_schedule(len(regimes), period)
    elif schedule == "gradual":
        spec = gradual_schedule(len(regimes), period)
    elif schedule == "stationary":
        regimes = regimes[:1]
        spec = stationary_schedule()
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    return LinearMdpParams(features, regimes, spec, episodes)


# lower-bound hard instances


def hard_actions(d: int) -> np.ndarray:
    """All sign vectors in ``{+-1/sqrt(d-3)}^(d-3)``, shape ``(2^(d-3), d-3)``.

    Action 0 is the all-positive vector.
    """
    m = d - 3
    if m < 1:
        raise PreconditionViolated("hard instances need d >= 4")
    if m > MAX_HARD_SIGN_DIM:
        raise PreconditionViolated(f"d - 3 = {m} exceeds the enumerable cap {MAX_HARD_SIGN_DIM}")
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=m)))
    return signs / math.sqrt(m)


@dataclass(frozen=True)
class HardInstanceSpec:
    """A member of the 3-state lower-bound ensemble.

    ``signs`` picks the sign of each coordinate of ``v``; every entry has
    magnitude ``sqrt((d-3) H / T)``.
    """

    d: int
    H: int
    T: int
    signs: tuple = None
    delta: float = HARD_DELTA

    def __post_init__(self):
        if self.d < 4:
            raise PreconditionViolated("hard instances need d >= 4")
        if self.T < 64 * (self.d - 3) ** 2 * self.H:
            raise PreconditionViolated(
                f"T = {self.T} violates T >= 64(d-3)^2 H = {64 * (self.d - 3) ** 2 * self.H}"
            )
        signs = (1,) * (self.d - 3) if self.signs is None else tuple(int(np.sign(x)) for x in self.signs)
        if len(signs) != self.d - 3 or 0 in signs:
            raise ValueError("signs must be d-3 nonzero entries")
        object.__setattr__(self, "signs", signs)

    @property
    def magnitude(self) -> float:
        return math.sqrt((self.d - 3) * self.H) / math.sqrt(self.T)

    @property
    def v(self) -> np.ndarray:
        return self.magnitude * np.array(self.signs, dtype=float)


def _hard_features(d: int, delta: float) -> FeatureMap:
    acts = hard_actions(d)
    A = len(acts)
    table = np.zeros((3, A, d))
    table[0, :, 1] = 1.0
    table[0, :, 2] = delta
    table[0, :, 3:] = acts
    table[1, :, 0] = 1.0
    table[2, :, 1] = 1.0
    return FeatureMap(table, normalized=False)


def _hard_regime(v: np.ndarray, d: int, H: int) -> EpisodeParams:
    mu = np.zeros((d, 3))
    mu[0, 1] = 1.0
    mu[2, 1] = 1.0
    mu[3:, 1] = v
    mu[1, 2] = 1.0
    mu[2, 2] = -1.0
    mu[3:, 2] = -v
    theta = np.zeros(d)
    theta[0] = 1.0
    return EpisodeParams(np.tile(theta, (H, 1)), np.tile(mu, (H, 1, 1)))


def build_hard_instance(spec: HardInstanceSpec, episodes: int | None = None) -> LinearMdpParams:
    """Stationary 3-state instance: ``s_0`` moves to ``s_1`` with probability
    ``delta + <a, v>`` and to ``s_2`` otherwise; ``s_1`` (reward 1) and ``s_2``
    (reward 0) are absorbing. Episodes always start in state 0.
    """
    K = spec.T // spec.H if episodes is None else episodes
    features = _hard_features(spec.d, spec.delta)
    regime = _hard_regime(spec.v, spec.d, spec.H)
    return LinearMdpParams(features, [regime], ScheduleSpec("stationary"), K)


def lower_bound_interval_length(B: float, d: int, H: int, K: int) -> int:
    """Smallest interval length whose worst-case total drift stays within ``B``.

    A boundary between two intervals changes ``mu`` at every step by at most
    ``sqrt(2) * 2(d-3)/sqrt(N)`` in Frobenius norm, and there are
    ``ceil(K/N) - 1`` boundaries. ``N`` is also floored at ``64 (d-3)^2`` so
    each interval satisfies the hard-instance precondition.
    """
    m = d - 3
    n_min = 64 * m * m
    guess = math.ceil(B ** (-2 / 3) * (2 * m) ** (2 / 3) * K ** (2 / 3)) if B > 0 else K

    def drift(N):
        return (math.ceil(K / N) - 1) * H * math.sqrt(2) * 2 * m / math.sqrt(N)

    N = max(n_min, min(guess, K))
    while N > n_min and drift(N - 1) <= B:
        N -= 1
    while N < K and drift(N) > B:
        N += 1
    return max(N, 1)


def lower_bound_schedule(B: float, d: int, H: int, K: int, seed=0) -> LinearMdpParams:
    """Concatenate independent hard instances over intervals of ``N`` episodes.

    Each interval draws a fresh sign vector; ``v`` entries have magnitude
    ``sqrt((d-3)/N)``.
    """
    if d < 4:
        raise PreconditionViolated("hard instances need d >= 4")
    N = lower_bound_interval_length(B, d, H, K)
    n_intervals = math.ceil(K / N)
    rng = np.random.default_rng(seed)
    mag = math.sqrt(d - 3) / math.sqrt(N)
    regimes = [
        _hard_regime(mag * rng.choice((-1.0, 1.0), size=d - 3), d, H) for _ in range(n_intervals)
    ]
    schedule = ScheduleSpec("lower_bound_intervals", n_intervals, N)
    return LinearMdpParams(_hard_features(d, HARD_DELTA), regimes, schedule, K)


# interaction loop


@dataclass
class EnvState:
    k: int
    h: int
    s: int
    horizon: int

    @property
    def done(self) -> bool:
        return self.h >= self.horizon


class LinearMdpEnv:
    """Episodic simulator over a :class:`LinearMdpParams`.

    ``initial_state`` is ``"uniform"`` (over all states), ``"special_heads"``
    (uniform over the first ``num_heads`` states) or a fixed state index.
    """

    def __init__(self, params: LinearMdpParams, rng: np.random.Generator, initial_state="uniform",
                 num_heads=5):
        self.params = params
        self.rng = rng
        self.initial_state = initial_state
        self.num_heads = num_heads
        self.state: EnvState | None = None
        self._snap = None

    def initial(self) -> int:
        rule = self.initial_state
        if rule == "uniform":
            return int(self.rng.integers(self.params.num_states))
        if rule == "special_heads":
            return int(self.rng.integers(min(self.num_heads, self.params.num_states)))
        return int(rule)

    def reset(self, k: int) -> EnvState:
        self._snap = self.params.snapshot(k)
        self.state = EnvState(k, 0, self.initial(), self.params.horizon)
        return self.state

    def step(self, a: int):
        st = self.state
        if st is None or st.done:
            raise EpisodeFinished("step called after the episode ended")
        snap = self._snap
        r = float(snap.reward[st.h, st.s, a])
        cdf = np.cumsum(snap.transition[st.h, st.s, a])
        nxt = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        nxt = min(nxt, len(cdf) - 1)
        st.h += 1
        st.s = nxt
        return nxt, r, st.done
