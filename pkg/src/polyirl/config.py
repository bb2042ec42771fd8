"""Run configuration: strict YAML with unknown-key rejection.

Every pipeline stage reads the same YAML file. Parsing is deliberately
strict — a typo in a key name is a hard ConfigError naming the offending
path, never a silently ignored setting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .envs import EnvId
from .errors import ConfigError

FEATURE_SETS = ("proposed", "linear", "all", "random", "handpicked")


def _require_mapping(obj: Any, where: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(obj).__name__}")
    return obj


def _build(cls, raw: dict, where: str):
    """Instantiate a config dataclass from a dict, rejecting unknown keys."""
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]!r}")
    try:
        return cls(**raw)
    except TypeError as err:
        raise ConfigError(f"{where}: {err}") from err


def _check_number(value, where: str, lo=None, hi=None, integral=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if integral and not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{where} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where} must be <= {hi}, got {value}")


@dataclass(frozen=True)
class EnvSection:
    id: str = ""
    max_episode_steps: int | None = None

    def __post_init__(self) -> None:
        try:
            EnvId(self.id)
        except ValueError:
            valid = ", ".join(e.value for e in EnvId)
            raise ConfigError(f"env.id must be one of: {valid} (got {self.id!r})")
        if self.max_episode_steps is not None:
            _check_number(self.max_episode_steps, "env.max_episode_steps", lo=1, integral=True)

    @property
    def env_id(self) -> EnvId:
        return EnvId(self.id)


@dataclass(frozen=True)
class OptimizerSection:
    method: str = "cem"
    iterations: int = 10
    population: int = 32
    elite_frac: float = 0.2
    rollouts_per_eval: int = 2
    gamma: float = 0.99
    init_sigma: float = 1.0
    sigma_floor: float = 0.02
    noise_decay: float = 0.95
    learning_rate: float = 0.05

    def __post_init__(self) -> None:
        if self.method not in ("cem", "reinforce"):
            raise ConfigError(f"optimizer method must be cem or reinforce, got {self.method!r}")
        _check_number(self.iterations, "optimizer.iterations", lo=0, integral=True)
        _check_number(self.population, "optimizer.population", lo=4, integral=True)
        _check_number(self.elite_frac, "optimizer.elite_frac")
        if not 0.0 < self.elite_frac < 1.0:
            raise ConfigError("optimizer.elite_frac must lie in (0, 1)")
        _check_number(self.rollouts_per_eval, "optimizer.rollouts_per_eval", lo=1, integral=True)
        _check_number(self.gamma, "optimizer.gamma")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("optimizer.gamma must lie in (0, 1]")
        _check_number(self.init_sigma, "optimizer.init_sigma", lo=0.0)
        _check_number(self.sigma_floor, "optimizer.sigma_floor", lo=0.0)
        _check_number(self.noise_decay, "optimizer.noise_decay")
        if not 0.0 < self.noise_decay <= 1.0:
            raise ConfigError("optimizer.noise_decay must lie in (0, 1]")
        _check_number(self.learning_rate, "optimizer.learning_rate", lo=0.0)


@dataclass(frozen=True)
class ExpertSection:
    n_trajectories: int = 100
    seed: int = 0
    min_mean_return: float | None = None
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)

    def __post_init__(self) -> None:
        _check_number(self.n_trajectories, "expert.n_trajectories", lo=1, integral=True)
        _check_number(self.seed, "expert.seed", integral=True)
        if self.min_mean_return is not None:
            _check_number(self.min_mean_return, "expert.min_mean_return")


@dataclass(frozen=True)
class FeaturesSection:
    set: str = "proposed"
    k: int = 4
    seed: int | None = None  # used by the random baseline; defaults to irl.seed

    def __post_init__(self) -> None:
        if self.set not in FEATURE_SETS:
            raise ConfigError(
                f"features.set must be one of {FEATURE_SETS}, got {self.set!r}"
            )
        _check_number(self.k, "features.k", lo=1, integral=True)
        if self.seed is not None:
            _check_number(self.seed, "features.seed", integral=True)


@dataclass(frozen=True)
class KdeSection:
    bandwidth_rule: str = "scott"
    fixed_cov: float | None = None

    def __post_init__(self) -> None:
        if self.bandwidth_rule not in ("scott", "silverman", "fixed"):
            raise ConfigError(
                f"kde.bandwidth_rule must be scott, silverman or fixed, "
                f"got {self.bandwidth_rule!r}"
            )
        if self.bandwidth_rule == "fixed":
            if self.fixed_cov is None:
                raise ConfigError("kde.fixed_cov is required when bandwidth_rule is fixed")
            _check_number(self.fixed_cov, "kde.fixed_cov")
            if self.fixed_cov <= 0:
                raise ConfigError("kde.fixed_cov must be positive")
        elif self.fixed_cov is not None:
            raise ConfigError("kde.fixed_cov is only valid with bandwidth_rule: fixed")


@dataclass(frozen=True)
class IrlSection:
    epochs: int = 50
    learning_rate: float = 0.2
    lr_decay: float = 0.97
    n_rollouts: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        _check_number(self.epochs, "irl.epochs", lo=0, integral=True)
        _check_number(self.learning_rate, "irl.learning_rate")
        if self.learning_rate <= 0:
            raise ConfigError("irl.learning_rate must be positive")
        _check_number(self.lr_decay, "irl.lr_decay")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("irl.lr_decay must lie in (0, 1]")
        _check_number(self.n_rollouts, "irl.n_rollouts", lo=1, integral=True)
        _check_number(self.seed, "irl.seed", integral=True)


@dataclass(frozen=True)
class EvalSection:
    n_episodes: int = 30
    seed: int = 10_000
    w2_points: int = 512

    def __post_init__(self) -> None:
        _check_number(self.n_episodes, "eval.n_episodes", lo=1, integral=True)
        _check_number(self.seed, "eval.seed", integral=True)
        _check_number(self.w2_points, "eval.w2_points", lo=1, integral=True)
        if self.w2_points > 2048:
            raise ConfigError("eval.w2_points must be <= 2048 (exact solver limit)")


@dataclass(frozen=True)
class RunConfig:
    env: EnvSection
    expert: ExpertSection = field(default_factory=ExpertSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    kde: KdeSection = field(default_factory=KdeSection)
    irl: IrlSection = field(default_factory=IrlSection)
    policy: OptimizerSection = field(default_factory=OptimizerSection)
    eval: EvalSection = field(default_factory=EvalSection)
    output_dir: str = "runs/out"


_SECTION_TYPES = {
    "env": EnvSection,
    "expert": ExpertSection,
    "features": FeaturesSection,
    "kde": KdeSection,
    "irl": IrlSection,
    "policy": OptimizerSection,
    "eval": EvalSection,
}


def parse_config(raw: dict) -> RunConfig:
    raw = _require_mapping(raw, "config")
    if "env" not in raw:
        raise ConfigError("config is missing the required 'env' section")
    known = set(_SECTION_TYPES) | {"output_dir"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key {unknown[0]!r}")

    sections: dict[str, Any] = {}
    for name, cls in _SECTION_TYPES.items():
        if name not in raw:
            continue
        body = _require_mapping(raw[name], name)
        if name == "expert" and "optimizer" in body:
            body = dict(body)
            body["optimizer"] = _build(
                OptimizerSection,
                _require_mapping(body["optimizer"], "expert.optimizer"),
                "expert.optimizer",
            )
        sections[name] = _build(cls, body, name)

    out_dir = raw.get("output_dir", "runs/out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir must be a non-empty string")
    return RunConfig(output_dir=out_dir, **sections)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"invalid YAML in {path}: {err}") from err
    return parse_config(_require_mapping(raw, str(path)))


def config_echo(cfg: RunConfig) -> dict:
    """Plain-dict snapshot of the parsed config, for the manifest."""

    def as_dict(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {f.name: as_dict(getattr(obj, f.name)) for f in fields(obj)}
        return obj

    return as_dict(cfg)
