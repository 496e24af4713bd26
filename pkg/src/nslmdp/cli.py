"""Command-line entry point: ``nslmdp run | gen-env | plot-data``.

Exit codes: 0 success, 1 bad configuration or input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .config import ConfigError, load_config, preset
from .envs import (
    ConstructionInvalid,
    HardInstanceSpec,
    PreconditionViolated,
    build_hard_instance,
    combination_lock,
    lower_bound_schedule,
)
from .harness import export_csv, run_experiment

SEED_ENV = "NSLMDP_SEED"


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else preset(args.preset)
    changes = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            changes["base_seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env_seed!r}") from None
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["output"] = args.out
    return cfg.replace(**changes) if changes else cfg


def cmd_run(args) -> int:
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        return _fail(1, f"config field {exc}")
    except OSError as exc:
        return _fail(1, f"cannot read config: {exc}")
    if args.jobs is not None and args.jobs < 1:
        return _fail(1, "config field jobs: must be >= 1")
    try:
        result = run_experiment(cfg, jobs=args.jobs)
        export_csv(result, cfg.output, traces_json=args.traces)
        cfg.dump(os.path.join(cfg.output, "config.yaml"))
    except Exception as exc:  # anything past validation is a runtime failure
        return _fail(2, f"{type(exc).__name__}: {exc}")
    for agent in result.agents:
        mean, std = agent.cum_reward
        print(f"{agent.label}: cum_reward {mean[-1]:.1f} +- {std[-1]:.1f}, "
              f"runtime {agent.runtimes.mean():.2f} s/trial")
    return 0


def cmd_gen_env(args) -> int:
    if args.T % args.H:
        return _fail(1, f"T={args.T} must be a multiple of H={args.H}")
    K = args.T // args.H
    try:
        if args.kind == "combination-lock":
            params = combination_lock(args.seed, args.schedule, K, args.period, args.S, args.A,
                                      args.H, args.d, args.num_chains)
        elif args.kind == "hard-instance":
            signs = np.random.default_rng(args.seed).choice((-1, 1), size=max(args.d - 3, 0))
            params = build_hard_instance(HardInstanceSpec(args.d, args.H, args.T, tuple(signs)))
        else:
            params = lower_bound_schedule(args.B, args.d, args.H, K, args.seed)
    except (PreconditionViolated, ConstructionInvalid, ValueError) as exc:
        return _fail(1, str(exc))
    try:
        params.save_json(args.out)
    except OSError as exc:
        return _fail(2, f"cannot write {args.out}: {exc}")
    print(f"{args.kind}: S={params.num_states} A={params.num_actions} d={params.dim} "
          f"H={params.horizon} K={params.episodes} -> {args.out}")
    return 0


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def cmd_plot_data(args) -> int:
    for d in args.inputs:
        for name in ("summary.csv", "runtime.json"):
            if not os.path.exists(os.path.join(d, name)):
                return _fail(1, f"missing {name} in {d}")
    try:
        os.makedirs(args.out, exist_ok=True)
        runtime_rows = []
        for d in args.inputs:
            with open(os.path.join(d, "runtime.json")) as f:
                runtime = json.load(f)
            env = runtime.get("experiment") or os.path.basename(os.path.normpath(d))
            labels = [row["agent"] for row in _read_csv(os.path.join(d, "summary.csv"))]
            for metric in ("reward", "regret"):
                with open(os.path.join(args.out, f"{env}.cum_{metric}.csv"), "w", newline="") as f:
                    w = csv.writer(f, lineterminator="\n")
                    w.writerow(["agent", "episode", "mean", "std"])
                    for label in labels:
                        for row in _read_csv(os.path.join(d, f"{label}.csv")):
                            w.writerow([label, row["episode"], row[f"mean_cum_{metric}"],
                                        row[f"std_cum_{metric}"]])
            for label in labels:
                t = runtime["agents"][label]
                runtime_rows.append([env, label, repr(t["mean_seconds"]), repr(t["std_seconds"])])
        with open(os.path.join(args.out, "runtime.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["environment", "agent", "mean_seconds", "std_seconds"])
            w.writerows(runtime_rows)
    except FileNotFoundError as exc:
        return _fail(1, f"missing input: {exc.filename}")
    except (KeyError, OSError) as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")
    print(f"wrote plot data for {len(args.inputs)} experiment(s) to {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nslmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a YAML experiment config")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="paper-abrupt, paper-gradual, stationary or lower-bound")
    src.add_argument("--config", help="path to a YAML config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--jobs", type=int, help="concurrent trials (default: CPU count)")
    run.add_argument("--seed", type=int, help=f"base seed (overrides ${SEED_ENV} and the config)")
    run.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    run.add_argument("--traces", action="store_true", help="also write per-trial traces.json")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen-env", help="write an environment as JSON")
    gen.add_argument("--kind", required=True, choices=("combination-lock", "hard-instance", "lower-bound"))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="env.json")
    gen.add_argument("--schedule", default="abrupt", choices=("abrupt", "gradual", "stationary"))
    gen.add_argument("--period", type=int, default=100)
    gen.add_argument("--S", type=int, default=15)
    gen.add_argument("--A", type=int, default=7)
    gen.add_argument("--H", type=int, default=10)
    gen.add_argument("--d", type=int, default=10)
    gen.add_argument("--num-chains", type=int, default=5)
    gen.add_argument("--T", type=int, default=20000, help="total steps; episodes = T / H")
    gen.add_argument("--B", type=float, default=50.0, help="variation budget (lower-bound kind)")
    gen.set_defaults(func=cmd_gen_env)

    plot = sub.add_parser("plot-data", help="tidy long-format files from run outputs")
    plot.add_argument("--in", dest="inputs", action="append", required=True,
                      help="results directory (repeat for several environments)")
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
