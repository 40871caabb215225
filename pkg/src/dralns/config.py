"""YAML run configuration.

One file drives every CLI mode; each section maps onto the corresponding
parameter dataclass.  Seeds are always explicit - nothing reads ambient
entropy.

Recognized keys::

    problem: opswtw | tsp | cvrp | mtsp
    instances:
      path: <dir of instance .json files>        # or:
      generate: {count: int, size: int, seed: int, salesmen: int?}
    alns:                                        # AlnsParams fields
      omega: [5, 3, 1, 0]
      theta: 0.8
      dod: 0.3
      t_start: null                              # null = rule of thumb
      iterations: 1000
    env:                                         # EnvConfig fields
      episode_length: 100
      repair_eval_samples: 5
      accept_eval_samples: 100
      control_severity: true
      control_temperature: true
    ppo:                                         # PpoConfig fields
      learning_rate: 3.0e-4
      ...
    solve:
      method: vanilla | dralns
      runs_per_instance: 1
      checkpoint: <path>                          # dralns only
      evaluation_seed: 1234                       # opswtw rescoring
      deterministic: false                        # dralns action selection
    train:
      checkpoint: <output path>
      checkpoint_interval: 0                      # steps; 0 = final only
    tune:
      budget: 25
      instances: {count: 25, size: 20, seed: ...}
    bench:
      inputs: [<results.csv>, ...]
      ablation: {checkpoint: <path>, variants: [os, os_d, os_acc, os_d_acc]}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import AlnsParams
from .env import EnvConfig
from .policy import PpoConfig
from .problems import PROBLEM_NAMES

ABLATION_VARIANTS = ("os", "os_d", "os_acc", "os_d_acc")


class ConfigError(Exception):
    """Invalid or inconsistent run configuration (CLI exit code 3)."""


@dataclass
class InstanceSpec:
    path: str | None = None
    count: int = 0
    size: int = 0
    seed: int = 0
    salesmen: int = 2

    @classmethod
    def from_mapping(cls, data: dict[str, Any], where: str) -> "InstanceSpec":
        if "path" in data:
            return cls(path=str(data["path"]))
        gen = data.get("generate", data)
        try:
            return cls(count=int(gen["count"]), size=int(gen["size"]),
                       seed=int(gen["seed"]), salesmen=int(gen.get("salesmen", 2)))
        except KeyError as exc:
            raise ConfigError(f"{where}: generate needs count, size and seed "
                              f"(missing {exc})") from None

    def key(self) -> tuple:
        """Identity used to warn about tuning/evaluation overlap."""
        if self.path is not None:
            return ("path", str(Path(self.path).resolve()))
        return ("generate", self.count, self.size, self.seed, self.salesmen)


@dataclass
class SolveConfig:
    method: str = "vanilla"
    runs_per_instance: int = 1
    checkpoint: str | None = None
    evaluation_seed: int = 1234
    deterministic: bool = False   # dralns: per-head argmax instead of sampling

    def __post_init__(self) -> None:
        if self.method not in ("vanilla", "dralns"):
            raise ConfigError(f"solve.method must be vanilla or dralns, got {self.method!r}")
        if self.runs_per_instance < 1:
            raise ConfigError("solve.runs_per_instance must be at least 1")


@dataclass
class TrainConfig:
    checkpoint: str = "model.npz"
    checkpoint_interval: int = 0


@dataclass
class TuneConfig:
    budget: int = 25
    instances: InstanceSpec | None = None


@dataclass
class BenchConfig:
    inputs: list[str] = field(default_factory=list)
    ablation: dict[str, Any] | None = None


@dataclass
class RunConfig:
    problem: str
    instances: InstanceSpec
    alns: AlnsParams = field(default_factory=AlnsParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


def _build(cls, data: dict[str, Any], where: str):
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    problem = data.get("problem")
    if problem not in PROBLEM_NAMES:
        raise ConfigError(f"problem must be one of {PROBLEM_NAMES}, got {problem!r}")
    if "instances" not in data:
        raise ConfigError("configuration needs an 'instances' section")
    instances = InstanceSpec.from_mapping(data["instances"], "instances")
    alns_data = dict(data.get("alns", {}))
    if "omega" in alns_data:
        alns_data["omega"] = tuple(alns_data["omega"])
    cfg = RunConfig(
        problem=problem,
        instances=instances,
        alns=_build(AlnsParams, alns_data, "alns"),
        env=_build(EnvConfig, dict(data.get("env", {})), "env"),
        ppo=_build(PpoConfig, dict(data.get("ppo", {})), "ppo"),
        solve=_build(SolveConfig, dict(data.get("solve", {})), "solve"),
        train=_build(TrainConfig, dict(data.get("train", {})), "train"),
    )
    tune_data = dict(data.get("tune", {}))
    tune_instances = tune_data.pop("instances", None)
    cfg.tune = _build(TuneConfig, tune_data, "tune")
    if tune_instances is not None:
        cfg.tune.instances = InstanceSpec.from_mapping(tune_instances, "tune.instances")
    bench_data = dict(data.get("bench", {}))
    cfg.bench = _build(BenchConfig, bench_data, "bench")
    if cfg.bench.ablation is not None:
        variants = cfg.bench.ablation.get("variants", list(ABLATION_VARIANTS))
        bad = [v for v in variants if v not in ABLATION_VARIANTS]
        if bad:
            raise ConfigError(f"bench.ablation.variants: unknown variants {bad}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_config(data or {})


def ablation_env(base: EnvConfig, variant: str, dod: float,
                 t_start: float | None) -> EnvConfig:
    """Env config for one ablation variant: os / os_d / os_acc / os_d_acc."""
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    return EnvConfig(episode_length=base.episode_length,
                     repair_eval_samples=base.repair_eval_samples,
                     accept_eval_samples=base.accept_eval_samples,
                     control_severity=variant in ("os_d", "os_d_acc"),
                     control_temperature=variant in ("os_acc", "os_d_acc"),
                     fallback_dod=dod, fallback_t_start=t_start)
