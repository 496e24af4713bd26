"""Experiment configuration (YAML) and the named presets."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .agents import AGENT_KINDS, AgentConfig, BetaPolicy
from .envs import (
    HardInstanceSpec,
    build_hard_instance,
    combination_lock,
    lower_bound_schedule,
)

ENV_KINDS = ("combination-lock", "hard-instance", "lower-bound")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class EnvConfig:
    """Environment construction. ``seed=None`` builds a fresh instance per
    trial from the trial seed; an integer pins one instance for all trials.
    """

    kind: str = "combination-lock"
    schedule: str = "abrupt"
    period: int = 100
    S: int = 15
    A: int = 7
    H: int = 10
    d: int = 10
    num_chains: int = 5
    B: float = 50.0
    seed: int | None = None

    def build(self, trial_seed: int, T: int):
        from .harness import ENV_BUILD, substream

        seed = self.seed
        if seed is None:
            seed = int(substream(trial_seed, ENV_BUILD).integers(2**31))
        K = T // self.H
        if self.kind == "combination-lock":
            return combination_lock(seed, self.schedule, K, self.period, self.S, self.A, self.H,
                                    self.d, self.num_chains)
        if self.kind == "hard-instance":
            rng = substream(seed, ENV_BUILD)
            signs = tuple(rng.choice((-1, 1), size=self.d - 3))
            return build_hard_instance(HardInstanceSpec(self.d, self.H, T, signs), K)
        return lower_bound_schedule(self.B, self.d, self.H, K, seed)

    @property
    def initial_state(self):
        return 0 if self.kind != "combination-lock" else None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig
    agents: tuple
    T: int
    trials: int = 10
    base_seed: int = 42
    output: str = "results"
    preset: str | None = None
    initial_state: str | int = "uniform"

    @property
    def name(self) -> str:
        return self.preset or "custom"

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "T": self.T,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "output": self.output,
            "initial_state": self.initial_state,
            "env": self.env.to_dict(),
            "agents": [a.to_dict() for a in self.agents],
        }

    def dump(self, path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    def replace(self, **changes) -> "ExperimentConfig":
        doc = self.to_dict()
        doc.update(changes)
        return parse_config(doc)


def _int(doc, key, where, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise ConfigError(f"{where}{key}", "missing required field")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}{key}", f"expected an integer, got {value!r}")
    return value


def _parse_beta(doc, where) -> BetaPolicy:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected a mapping")
    try:
        return BetaPolicy(
            mode=doc.get("mode", "unknown_variation"),
            c=float(doc.get("c", 1.0)),
            p=float(doc.get("p", 0.05)),
            scale=float(doc.get("scale", 0.001)),
            use_T=bool(doc.get("use_T", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}.mode", str(exc)) from None


def _parse_agent(doc, i) -> AgentConfig:
    where = f"agents[{i}]"
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected a mapping")
    kind = doc.get("kind")
    if kind not in AGENT_KINDS:
        raise ConfigError(f"{where}.kind", f"expected one of {AGENT_KINDS}, got {kind!r}")
    epoch = doc.get("epoch_size")
    if epoch is not None and not (isinstance(epoch, int) or epoch in ("known", "unknown")):
        raise ConfigError(f"{where}.epoch_size", f"expected an integer, 'known' or 'unknown', got {epoch!r}")
    try:
        return AgentConfig(
            kind=kind,
            name=doc.get("name"),
            epoch_size=epoch,
            beta=_parse_beta(doc.get("beta"), f"{where}.beta"),
            epsilon=float(doc.get("epsilon", 0.05)),
            block_coeff=float(doc.get("block_coeff", 5.0)),
            epoch_scale=float(doc.get("epoch_scale", 1.0)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _parse_env(doc) -> EnvConfig:
    if not isinstance(doc, dict):
        raise ConfigError("env", "expected a mapping")
    kind = doc.get("kind", "combination-lock")
    if kind not in ENV_KINDS:
        raise ConfigError("env.kind", f"expected one of {ENV_KINDS}, got {kind!r}")
    schedule = doc.get("schedule", "abrupt")
    if schedule not in ("abrupt", "gradual", "stationary"):
        raise ConfigError("env.schedule", f"unknown schedule {schedule!r}")
    defaults = EnvConfig()
    kw = {k: _int(doc, k, "env.", getattr(defaults, k))
          for k in ("period", "S", "A", "H", "d", "num_chains")}
    kw["seed"] = _int(doc, "seed", "env.")
    for key in ("period", "S", "A", "H", "d"):
        if kw[key] < 1:
            raise ConfigError(f"env.{key}", "must be >= 1")
    return EnvConfig(kind=kind, schedule=schedule, B=float(doc.get("B", defaults.B)), **kw)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config mapping. Errors name the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    env = _parse_env(doc.get("env", {}))
    T = _int(doc, "T", "", required=True)
    if T < 1 or T % env.H:
        raise ConfigError("T", f"must be a positive multiple of H={env.H}")
    trials = _int(doc, "trials", "", 10)
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    agents_doc = doc.get("agents")
    if not agents_doc:
        raise ConfigError("agents", "missing required field")
    agents = tuple(_parse_agent(a, i) for i, a in enumerate(agents_doc))
    labels = [a.label for a in agents]
    if len(set(labels)) != len(labels):
        raise ConfigError("agents", "agent names must be unique")
    initial = doc.get("initial_state", "uniform")
    if env.initial_state is not None:
        initial = env.initial_state
    elif not (isinstance(initial, int) or initial in ("uniform", "special_heads")):
        raise ConfigError("initial_state", "expected 'uniform', 'special_heads' or a state index")
    return ExperimentConfig(
        env=env,
        agents=agents,
        T=T,
        trials=trials,
        base_seed=_int(doc, "base_seed", "", 42),
        output=str(doc.get("output", "results")),
        preset=doc.get("preset"),
        initial_state=initial,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        doc = yaml.safe_load(f)
    return parse_config(doc)


EXPERIMENT_BETA = {"mode": "experiment_scaled", "c": 1.0, "p": 0.05, "scale": 0.001}

EXPERIMENT_AGENTS = [
    {"kind": "lsvi_ucb_restart", "name": "LSVI-UCB-Restart", "epoch_size": "known",
     "epoch_scale": 10.0, "beta": EXPERIMENT_BETA},
    {"kind": "ada_lsvi_ucb_restart", "name": "Ada-LSVI-UCB-Restart", "beta": EXPERIMENT_BETA,
     "block_coeff": 0.2},
    {"kind": "lsvi_ucb", "name": "LSVI-UCB", "beta": EXPERIMENT_BETA},
    {"kind": "epsilon_greedy", "name": "Epsilon-Greedy", "epsilon": 0.05},
    {"kind": "random", "name": "Random-Exploration"},
]

_EXPERIMENT_BASE = {
    "T": 20000,
    "trials": 10,
    "base_seed": 42,
    "initial_state": "uniform",
    "env": {"kind": "combination-lock", "schedule": "abrupt", "period": 100, "S": 15, "A": 7,
            "H": 10, "d": 10, "num_chains": 5},
    "agents": EXPERIMENT_AGENTS,
}

PRESETS = {
    "paper-abrupt": {**_EXPERIMENT_BASE, "preset": "paper-abrupt", "output": "results/paper-abrupt"},
    "paper-gradual": {**_EXPERIMENT_BASE, "preset": "paper-gradual", "output": "results/paper-gradual",
                      "env": {**_EXPERIMENT_BASE["env"], "schedule": "gradual"}},
    "stationary": {**_EXPERIMENT_BASE, "preset": "stationary", "output": "results/stationary",
                   "env": {**_EXPERIMENT_BASE["env"], "schedule": "stationary"},
                   "agents": [EXPERIMENT_AGENTS[2]]},
    "lower-bound": {"preset": "lower-bound", "output": "results/lower-bound", "T": 20000, "trials": 10,
                    "base_seed": 42, "env": {"kind": "lower-bound", "d": 5, "H": 10, "B": 50.0},
                    "agents": [EXPERIMENT_AGENTS[2], EXPERIMENT_AGENTS[4]]},
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config(copy.deepcopy(PRESETS[name]))
