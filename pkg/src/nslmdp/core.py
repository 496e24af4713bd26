"""Linear MDP data model.

A nonstationary episodic linear MDP is a fixed feature table ``phi[s, a]``
plus, for every episode ``k``, per-step reward vectors ``theta[h]`` and
measures ``mu[h]`` (a ``d x S`` matrix). Transition probabilities and
rewards are the inner products ``phi(s, a) @ mu[h]`` and
``phi(s, a) @ theta[h]``.

Episodes, steps, states and actions are all 0-indexed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np

NEG_SLACK = 1e-12
SUM_SLACK = 1e-9
NORM_SLACK = 1e-9
SNAPSHOT_CACHE = 128


class InvalidDistribution(ValueError):
    pass


class InvalidReward(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """Feature vectors for every (state, action) pair, shape ``(S, A, d)``."""

    table: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 3:
            raise ValueError(f"feature table must have shape (S, A, d), got {table.shape}")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if self.normalized:
            norms = np.linalg.norm(table, axis=2)
            if norms.max() > 1 + NORM_SLACK:
                s, a = np.unravel_index(norms.argmax(), norms.shape)
                raise ValueError(
                    f"feature norm {norms[s, a]:.6g} at (s={s}, a={a}) exceeds 1; "
                    "pass normalized=False for unnormalized constructions"
                )

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    @property
    def dim(self) -> int:
        return self.table.shape[2]

    def __call__(self, s: int, a: int) -> np.ndarray:
        return self.table[s, a]


@dataclass(frozen=True)
class EpisodeParams:
    """Reward vectors ``theta`` of shape ``(H, d)`` and measures ``mu`` of shape ``(H, d, S)``."""

    theta: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if theta.ndim != 2 or mu.ndim != 3 or theta.shape[:2] != mu.shape[:2]:
            raise ValueError(f"incompatible shapes theta={theta.shape}, mu={mu.shape}")
        theta.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "mu", mu)

    @property
    def horizon(self) -> int:
        return self.theta.shape[0]


SCHEDULE_KINDS = ("stationary", "abrupt_cycle", "gradual_cycle", "lower_bound_intervals")


@dataclass(frozen=True)
class ScheduleSpec:
    """Maps an episode index to a convex mixture of regimes.

    ``stationary``: always regime 0.
    ``abrupt_cycle``: regime ``(k // period) % R``.
    ``gradual_cycle``: during period ``p`` the parameters move linearly from
    regime ``p % R`` to ``(p + 1) % R``; offset ``j`` (1-based) uses weight
    ``j / period`` on the target, so the last episode of a period equals the
    next regime exactly.
    ``lower_bound_intervals``: regime ``min(k // period, R - 1)``, one
    regime per interval.
    """

    kind: str
    num_regimes: int = 1
    period: int = 1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.num_regimes < 1:
            raise ValueError("need at least one regime")
        if self.kind == "gradual_cycle" and self.num_regimes < 2:
            raise ValueError("gradual schedule needs at least 2 regimes")

    def mixture(self, k: int) -> tuple[tuple[int, float], ...]:
        """``((regime, weight), ...)`` describing episode ``k``."""
        R = self.num_regimes
        if self.kind == "stationary":
            return ((0, 1.0),)
        if self.kind == "abrupt_cycle":
            return (((k // self.period) % R, 1.0),)
        if self.kind == "lower_bound_intervals":
            return ((min(k // self.period, R - 1), 1.0),)
        p, offset = divmod(k, self.period)
        lam = (offset + 1) / self.period
        src, dst = p % R, (p + 1) % R
        if lam == 1.0:
            return ((dst, 1.0),)
        return ((src, 1.0 - lam), (dst, lam))

    def interpolation_weight(self, k: int) -> float:
        """Weight on the target regime (1.0 for non-gradual schedules)."""
        return self.mixture(k)[-1][1]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "num_regimes": self.num_regimes, "period": self.period}


class LinearMdpParams:
    """Ground-truth nonstationary linear MDP over ``K`` episodes.

    Per-episode parameters are materialized lazily from ``regimes`` and
    ``schedule`` and cached by mixture key, so only distinct episodes are
    ever built.
    """

    def __init__(self, features: FeatureMap, regimes, schedule: ScheduleSpec, episodes: int):
        regimes = list(regimes)
        if len(regimes) != schedule.num_regimes:
            raise ValueError(
                f"schedule expects {schedule.num_regimes} regimes, got {len(regimes)}"
            )
        if episodes < 1:
            raise ValueError("episodes must be >= 1")
        H = regimes[0].horizon
        for r in regimes:
            if r.horizon != H or r.theta.shape[1] != features.dim or r.mu.shape[2] != features.num_states:
                raise ValueError("regime shapes do not match the feature map")
        self.features = features
        self.regimes = regimes
        self.schedule = schedule
        self.episodes = episodes
        self.horizon = H
        self._cache: dict = {}
        self._snapshots: dict = {}

    @property
    def num_states(self) -> int:
        return self.features.num_states

    @property
    def num_actions(self) -> int:
        return self.features.num_actions

    @property
    def dim(self) -> int:
        return self.features.dim

    def episode_key(self, k: int):
        if not 0 <= k < self.episodes:
            raise IndexError(f"episode {k} outside [0, {self.episodes})")
        return self.schedule.mixture(k)

    def episode(self, k: int) -> EpisodeParams:
        key = self.episode_key(k)
        ep = self._cache.get(key)
        if ep is None:
            if len(key) == 1:
                ep = self.regimes[key[0][0]]
            else:
                theta = sum(w * self.regimes[r].theta for r, w in key)
                mu = sum(w * self.regimes[r].mu for r, w in key)
                ep = EpisodeParams(theta, mu)
            self._cache[key] = ep
        return ep

    def snapshot(self, k: int) -> "TabularSnapshot":
        """Cached :func:`to_tabular` for episode ``k`` (bounded cache)."""
        key = self.episode_key(k)
        snap = self._snapshots.get(key)
        if snap is None:
            if len(self._snapshots) >= SNAPSHOT_CACHE:
                del self._snapshots[next(iter(self._snapshots))]
            snap = to_tabular(self, k)
            self._snapshots[key] = snap
        return snap

    def distinct_episodes(self) -> dict:
        """Map from mixture key to the first episode index using it."""
        seen: dict = {}
        for k in range(self.episodes):
            seen.setdefault(self.episode_key(k), k)
        return seen

    # serialization

    def to_dict(self) -> dict:
        return {
            "dims": {
                "num_states": self.num_states,
                "num_actions": self.num_actions,
                "dim": self.dim,
                "horizon": self.horizon,
                "episodes": self.episodes,
            },
            "normalized": self.features.normalized,
            "features": self.features.table.tolist(),
            "regimes": [{"theta": r.theta.tolist(), "mu": r.mu.tolist()} for r in self.regimes],
            "schedule": self.schedule.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearMdpParams":
        features = FeatureMap(np.array(doc["features"], dtype=float), bool(doc.get("normalized", True)))
        regimes = [EpisodeParams(np.array(r["theta"]), np.array(r["mu"])) for r in doc["regimes"]]
        sched = doc["schedule"]
        schedule = ScheduleSpec(sched["kind"], int(sched["num_regimes"]), int(sched["period"]))
        return cls(features, regimes, schedule, int(doc["dims"]["episodes"]))

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load_json(cls, path) -> "LinearMdpParams":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class TabularSnapshot:
    """Exact tabular form of one episode: ``transition`` is ``(H, S, A, S)``, ``reward`` is ``(H, S, A)``."""

    transition: np.ndarray
    reward: np.ndarray

    @property
    def horizon(self) -> int:
        return self.reward.shape[0]

    @property
    def num_states(self) -> int:
        return self.reward.shape[1]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[2]


@dataclass(frozen=True)
class VariationBudgets:
    b_theta: float
    b_mu: float
    b_total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "b_total", self.b_theta + self.b_mu)


@dataclass(frozen=True)
class Violation:
    kind: str  # "InvalidDistribution" or "InvalidReward"
    k: int
    h: int
    s: int
    a: int
    detail: str


def _check_distribution(p: np.ndarray, where: str) -> np.ndarray:
    if p.min() < -NEG_SLACK:
        raise InvalidDistribution(f"negative probability {p.min():.3g} at {where}")
    total = p.sum()
    if abs(total - 1.0) > SUM_SLACK:
        raise InvalidDistribution(f"probabilities sum to {total:.12g} at {where}")
    p = np.where(p < 0.0, 0.0, p)
    return p / p.sum()


def _check_reward(r: float, where: str) -> float:
    if r < -NEG_SLACK or r > 1.0 + SUM_SLACK:
        raise InvalidReward(f"reward {r:.12g} outside [0, 1] at {where}")
    return min(max(r, 0.0), 1.0)


def transition_probs(params: LinearMdpParams, k: int, h: int, s: int, a: int) -> np.ndarray:
    ep = params.episode(k)
    p = params.features.table[s, a] @ ep.mu[h]
    return _check_distribution(p, f"(k={k}, h={h}, s={s}, a={a})")


def reward(params: LinearMdpParams, k: int, h: int, s: int, a: int) -> float:
    ep = params.episode(k)
    r = float(params.features.table[s, a] @ ep.theta[h])
    return _check_reward(r, f"(k={k}, h={h}, s={s}, a={a})")


def _raw_tables(features: FeatureMap, ep: EpisodeParams):
    P = np.einsum("sad,hdn->hsan", features.table, ep.mu)
    r = np.einsum("sad,hd->hsa", features.table, ep.theta)
    return P, r


def _episode_violations(features: FeatureMap, ep: EpisodeParams, k: int) -> list[Violation]:
    P, r = _raw_tables(features, ep)
    out = []
    neg = P.min(axis=3) < -NEG_SLACK
    bad_sum = np.abs(P.sum(axis=3) - 1.0) > SUM_SLACK
    for h, s, a in zip(*np.nonzero(neg | bad_sum)):
        row = P[h, s, a]
        out.append(Violation("InvalidDistribution", k, int(h), int(s), int(a),
                             f"min={row.min():.3g}, sum={row.sum():.12g}"))
    bad_r = (r < -NEG_SLACK) | (r > 1.0 + SUM_SLACK)
    for h, s, a in zip(*np.nonzero(bad_r)):
        out.append(Violation("InvalidReward", k, int(h), int(s), int(a), f"reward={r[h, s, a]:.12g}"))
    return out


def validate(params: LinearMdpParams) -> list[Violation]:
    """Check every (k, h, s, a) tuple; an empty list means the MDP is valid.

    Episodes sharing parameters are checked once and violations are reported
    against every episode that uses them.
    """
    by_key: dict = {}
    for k in range(params.episodes):
        by_key.setdefault(params.episode_key(k), []).append(k)
    violations = []
    for key, ks in by_key.items():
        found = _episode_violations(params.features, params.episode(ks[0]), ks[0])
        for k in ks:
            violations.extend(Violation(v.kind, k, v.h, v.s, v.a, v.detail) for v in found)
    return violations


def to_tabular(params: LinearMdpParams, k: int) -> TabularSnapshot:
    P, r = _raw_tables(params.features, params.episode(k))
    if P.min() < -NEG_SLACK:
        h, s, a, _ = np.unravel_index(P.argmin(), P.shape)
        raise InvalidDistribution(f"negative probability {P.min():.3g} at (k={k}, h={h}, s={s}, a={a})")
    sums = P.sum(axis=3)
    dev = np.abs(sums - 1.0)
    if dev.max() > SUM_SLACK:
        h, s, a = np.unravel_index(dev.argmax(), dev.shape)
        raise InvalidDistribution(f"probabilities sum to {sums[h, s, a]:.12g} at (k={k}, h={h}, s={s}, a={a})")
    if r.min() < -NEG_SLACK or r.max() > 1.0 + SUM_SLACK:
        bad = np.abs(np.clip(r, 0, 1) - r)
        h, s, a = np.unravel_index(bad.argmax(), bad.shape)
        raise InvalidReward(f"reward {r[h, s, a]:.12g} outside [0, 1] at (k={k}, h={h}, s={s}, a={a})")
    P = np.where(P < 0.0, 0.0, P)
    P = P / P.sum(axis=3, keepdims=True)
    r = np.clip(r, 0.0, 1.0)
    P.setflags(write=False)
    r.setflags(write=False)
    return TabularSnapshot(P, r)


def variation_budgets(params: LinearMdpParams, start: int = 0, stop: int | None = None) -> VariationBudgets:
    """Parameter drift summed over episodes ``k`` in ``[max(start, 1), stop)``.

    Each episode ``k`` contributes ``sum_h ||theta_{h,k} - theta_{h,k-1}||_2``
    and ``sum_h ||mu_{h,k} - mu_{h,k-1}||_F``. With the defaults this is the
    full-horizon budget; a sub-range gives the local variation of an epoch,
    including the change entering its first episode.
    """
    stop = params.episodes if stop is None else min(stop, params.episodes)
    b_theta = 0.0
    b_mu = 0.0
    first = max(start, 1)
    prev_key = params.episode_key(first - 1) if first < stop else None
    for k in range(first, stop):
        key = params.episode_key(k)
        if key != prev_key:
            cur, prev = params.episode(k), params.episode(k - 1)
            for h in range(params.horizon):
                b_theta += float(np.linalg.norm(cur.theta[h] - prev.theta[h]))
                b_mu += float(np.linalg.norm(cur.mu[h] - prev.mu[h]))
        prev_key = key
    return VariationBudgets(b_theta, b_mu)


@dataclass(frozen=True)
class PolicySnapshot:
    """Action rule for one episode.

    ``deterministic``: ``table`` has shape ``(H, S)`` of action indices.
    ``stochastic``: ``table`` has shape ``(H, S, A)`` of action probabilities.
    """

    kind: str
    table: np.ndarray

    def __post_init__(self):
        if self.kind not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "stochastic":
            rows = np.asarray(self.table).sum(axis=-1)
            if np.abs(rows - 1.0).max() > 1e-12:
                raise ValueError("stochastic policy rows must sum to 1")

    def probabilities(self, num_actions: int) -> np.ndarray:
        """``(H, S, A)`` action probabilities for either kind."""
        if self.kind == "stochastic":
            return np.asarray(self.table, dtype=float)
        H, S = self.table.shape
        out = np.zeros((H, S, num_actions))
        out[np.arange(H)[:, None], np.arange(S)[None, :], self.table] = 1.0
        return out
