"""Nonstationary linear MDPs: simulators, LSVI-UCB agents with restarts,
an EXP3-P window tuner and a dynamic-regret harness."""

from .agents import (
    AgentConfig,
    BetaPolicy,
    LsviState,
    LsviUcbAgent,
    RandomAgent,
    epoch_size_known,
    epoch_size_unknown,
    gram_rank_one_update,
    lsvi_backward_pass,
    make_agent,
)
from .config import ConfigError, EnvConfig, ExperimentConfig, load_config, parse_config, preset
from .core import (
    EpisodeParams,
    FeatureMap,
    LinearMdpParams,
    PolicySnapshot,
    ScheduleSpec,
    TabularSnapshot,
    VariationBudgets,
    reward,
    to_tabular,
    transition_probs,
    validate,
    variation_budgets,
)
from .envs import (
    HardInstanceSpec,
    LinearMdpEnv,
    abrupt_schedule,
    build_combination_lock,
    build_hard_instance,
    combination_lock,
    gradual_schedule,
    lower_bound_schedule,
    stationary_schedule,
)
from .harness import (
    export_csv,
    optimal_values,
    policy_value,
    policy_values,
    run_agent,
    run_experiment,
    run_trial,
)
from .meta import AdaLsviUcbRestart, ada_run, block_plan, exp3p_init, exp3p_probabilities, exp3p_update

__version__ = "0.1.0"
