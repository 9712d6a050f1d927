"""Experiment configuration: flat ``section.key = value`` files and shipped presets.

Lists are comma separated (``env.capacity = 10,10``).  ``#`` starts a
comment.  Unknown keys are rejected.  Network input shape and action count
are derived from the environment; if a file states them they must agree.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .environment import EnvConfig, RewardWeights
from .errors import ConfigError, ParameterError
from .policy import NetConfig
from .trainer import TrainConfig
from .workload import WorkloadParams

PRESETS = ("single-machine.cfg", "two-machine.cfg", "toy.cfg")


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _ints(v):
    return tuple(int(x) for x in v.split(","))


def _floats(v):
    return tuple(float(x) for x in v.split(","))


# key -> (parser, destination field)
KEYS = {
    "env.num_machines": (_int, "num_machines"),
    "env.num_resources": (_int, "num_resources"),
    "env.capacity": (_ints, "capacity"),
    "env.lookahead_horizon": (_int, "lookahead_horizon"),
    "env.queue_length": (_int, "queue_length"),
    "env.backlog_capacity": (_int, "backlog_capacity"),
    "env.max_episode_length": (_int, "max_episode_length"),
    "env.alpha": (_floats, "alpha"),
    "env.beta": (_float, "beta"),
    "env.gamma": (_float, "gamma_weight"),
    "workload.arrival_rate": (_float, "arrival_rate"),
    "workload.short_fraction": (_float, "short_fraction"),
    "workload.short_duration_range": (_ints, "short_duration_range"),
    "workload.long_duration_range": (_ints, "long_duration_range"),
    "workload.dominant_demand_range": (_floats, "dominant_demand_range"),
    "workload.other_demand_range": (_floats, "other_demand_range"),
    "workload.num_resources": (_int, "num_resources"),
    "workload.capacity": (_ints, "capacity"),
    "workload.episode_arrival_window": (_int, "episode_arrival_window"),
    "workload.seed": (_int, "seed"),
    "net.input_rows": (_int, "input_rows"),
    "net.input_cols": (_int, "input_cols"),
    "net.num_actions": (_int, "num_actions"),
    "net.kernel_size": (_int, "kernel_size"),
    "net.num_filters": (_int, "num_filters"),
    "net.learning_rate": (_float, "learning_rate"),
    "net.rmsprop_decay": (_float, "rmsprop_decay"),
    "net.rmsprop_epsilon": (_float, "rmsprop_epsilon"),
    "train.num_iterations": (_int, "num_iterations"),
    "train.jobsets_per_iteration": (_int, "jobsets_per_iteration"),
    "train.episodes_per_jobset": (_int, "episodes_per_jobset"),
    "train.discount": (_float, "discount"),
    "train.max_episode_length": (_int, "max_episode_length"),
    "train.eval_every": (_int, "eval_every"),
    "train.seed": (_int, "seed"),
    "train.baseline_alignment": (str, "baseline_alignment"),
    "eval.num_jobsets": (_int, "num_jobsets"),
    "eval.seed": (_int, "seed"),
    "output.dir": (str, "dir"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig
    workload: WorkloadParams
    net: NetConfig
    train: TrainConfig
    output_dir: str = "runs/default"
    eval_jobsets: int = 50
    eval_seed: int = 1_000_003

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self, workload=dataclasses.replace(self.workload, seed=seed),
            train=dataclasses.replace(self.train, seed=seed))

    def with_iterations(self, iterations: int) -> "ExperimentConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train,
                                                                   num_iterations=iterations))


def preset_path(name: str) -> str:
    return str(resources.files("drlsched").joinpath("presets").joinpath(name))


def resolve_path(path: str) -> str:
    if os.path.exists(path):
        return path
    name = path if path.endswith(".cfg") else path + ".cfg"
    if name in PRESETS:
        return preset_path(name)
    raise ConfigError(f"config file not found: {path}")


def parse_lines(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key][0](value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    return values


def _section(values, section):
    prefix = section + "."
    return {KEYS[k][1]: v for k, v in values.items() if k.startswith(prefix)}


def build_config(values: dict, source: str = "<config>") -> ExperimentConfig:
    env_kw = _section(values, "env")
    weights = RewardWeights(env_kw.pop("alpha", None), env_kw.pop("beta", 1.0),
                            env_kw.pop("gamma_weight", 1.0))
    env = EnvConfig(reward_weights=weights, **env_kw)

    wl_kw = _section(values, "workload")
    for field in ("num_resources", "capacity"):
        if field in wl_kw and wl_kw[field] != getattr(env, field):
            raise ConfigError(f"{source}: workload.{field} = {wl_kw[field]} disagrees with "
                              f"env.{field} = {getattr(env, field)}")
    wl_kw.update(num_resources=env.num_resources, capacity=env.capacity)
    try:
        workload = WorkloadParams(**wl_kw)
    except ParameterError as exc:
        raise ConfigError(f"{source}: workload.{exc.field}: {exc}") from None
    if workload.max_duration > env.lookahead_horizon:
        raise ConfigError(f"{source}: env.lookahead_horizon = {env.lookahead_horizon} is shorter "
                          f"than the longest workload duration {workload.max_duration} "
                          f"(workload.long_duration_range)")

    net_kw = _section(values, "net")
    rows, cols = env.image_shape
    derived = {"input_rows": rows, "input_cols": cols, "num_actions": env.num_actions}
    origin = {"input_rows": "env.lookahead_horizon", "input_cols": "env image width",
              "num_actions": "env.num_machines * env.queue_length + 1"}
    for field, expected in derived.items():
        if field in net_kw and net_kw[field] != expected:
            raise ConfigError(f"{source}: net.{field} = {net_kw[field]} is inconsistent with "
                              f"{origin[field]} = {expected}")
        net_kw[field] = expected
    net = NetConfig(**net_kw)

    train = TrainConfig(**_section(values, "train"))
    eval_kw = _section(values, "eval")
    out = values.get("output.dir", "runs/default")
    return ExperimentConfig(env, workload, net, train, out,
                            eval_kw.get("num_jobsets", 50), eval_kw.get("seed", 1_000_003))


def load_config(path: str) -> ExperimentConfig:
    """Load a config file or a shipped preset by name."""
    real = resolve_path(path)
    with open(real, encoding="utf-8") as fh:
        text = fh.read()
    return build_config(parse_lines(text, real), real)


def load_preset(name: str, output_dir: Optional[str] = None) -> ExperimentConfig:
    cfg = load_config(name)
    return dataclasses.replace(cfg, output_dir=output_dir) if output_dir else cfg
