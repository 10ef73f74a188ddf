"""Experiment configuration: JSON schema, defaults and validation.

Example::

    {
      "env": {"preset": "small7"},
      "population": [{"kind": "world_model"}, {"kind": "world_model", "config": {"horizon": 8}}],
      "episodes": 300,
      "eval_every": 10,
      "eval_episodes": 5,
      "seeds": [0, 1, 2, 3, 4],
      "output_dir": "runs/wm_small7",
      "parallelism": 1
    }

``env`` is an EnvConfig mapping (optionally with ``preset``), a preset name,
or ``{"map_file": "arena.txt", ...}``. Unknown keys anywhere are errors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from commons_lab.env.config import EnvConfig
from commons_lab.errors import ConfigError

AGENT_KINDS = ("world_model", "pg", "q", "random", "greedy", "restrained")
SCRIPTED_KINDS = ("random", "greedy", "restrained")
OUTPUT_ROOT_VAR = "COMMONS_LAB_OUT"

_TOP_KEYS = {"env", "population", "episodes", "eval_every", "eval_episodes", "seeds", "output_dir",
             "parallelism", "smoothing", "log_every", "name"}


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))


@dataclass
class AgentSpec:
    kind: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": dict(self.config)}


@dataclass
class ExperimentConfig:
    env: EnvConfig
    population: list
    episodes: int = 100
    eval_every: int = 10
    eval_episodes: int = 5
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str | None = None
    parallelism: int = 1
    smoothing: int = 20
    log_every: int | None = None  # training episodes between recorded EpisodeLogs; default eval_every
    name: str = "experiment"

    def __post_init__(self):
        if len(self.population) != self.env.num_agents:
            raise ConfigError(
                f"population: {len(self.population)} agents listed but env.num_agents is {self.env.num_agents}")
        if not self.seeds:
            raise ConfigError("seeds: must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds: must be distinct, got {self.seeds}")
        for name in ("episodes", "eval_every", "parallelism", "smoothing"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.eval_episodes < 0:
            raise ConfigError("eval_episodes: must be >= 0")
        if self.log_every is not None and self.log_every < 1:
            raise ConfigError("log_every: must be >= 1")
        for i, spec in enumerate(self.population):
            _check_agent(i, spec)

    @property
    def population_label(self) -> str:
        kinds = sorted({s.kind for s in self.population})
        return "+".join(kinds)

    def resolved_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return default_output_root() / self.name

    def to_dict(self) -> dict:
        return {"env": self.env.to_dict(), "population": [s.to_dict() for s in self.population],
                "episodes": self.episodes, "eval_every": self.eval_every,
                "eval_episodes": self.eval_episodes, "seeds": list(self.seeds),
                "output_dir": self.output_dir, "parallelism": self.parallelism,
                "smoothing": self.smoothing, "log_every": self.log_every, "name": self.name}

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "env" not in data or "population" not in data:
            raise ConfigError("config needs both 'env' and 'population'")
        env = parse_env(data["env"], base_dir)
        pop = data["population"]
        if not isinstance(pop, list):
            raise ConfigError("population: must be a list of agent specs")
        specs = [parse_agent(i, s) for i, s in enumerate(pop)]
        kwargs = {k: data[k] for k in _TOP_KEYS - {"env", "population"} if k in data}
        for k, v in kwargs.items():
            if k in ("episodes", "eval_every", "eval_episodes", "parallelism", "smoothing") and \
                    (not isinstance(v, int) or isinstance(v, bool)):
                raise ConfigError(f"{k}: expected an integer, got {v!r}")
        if "seeds" in kwargs and (not isinstance(kwargs["seeds"], list)
                                  or not all(isinstance(s, int) and s >= 0 for s in kwargs["seeds"])):
            raise ConfigError(f"seeds: expected a list of non-negative integers, got {kwargs['seeds']!r}")
        return cls(env=env, population=specs, **kwargs)


def parse_env(value, base_dir: Path | None = None) -> EnvConfig:
    if isinstance(value, str):
        return EnvConfig.from_dict({"preset": value})
    if not isinstance(value, dict):
        raise ConfigError("env: expected a preset name or an object")
    value = dict(value)
    if "map_file" in value:
        path = Path(value.pop("map_file"))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            value["map"] = path.read_text()
        except OSError as exc:
            raise ConfigError(f"env.map_file: cannot read {path}: {exc.strerror}") from None
    try:
        return EnvConfig.from_dict(value)
    except ConfigError as exc:
        raise ConfigError(f"env: {exc}") from None


def parse_agent(i: int, spec) -> AgentSpec:
    where = f"population[{i}]"
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    unknown = set(spec) - {"kind", "config"}
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kind = spec.get("kind")
    if kind not in AGENT_KINDS:
        raise ConfigError(f"{where}.kind: {kind!r} is not one of {list(AGENT_KINDS)}")
    cfg = spec.get("config", {})
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}.config: expected an object")
    out = AgentSpec(kind, dict(cfg))
    _check_agent(i, out)
    return out


def _check_agent(i: int, spec: AgentSpec) -> None:
    """Build the kind-specific config once so bad fields surface at load time."""
    try:
        agent_config(spec)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"population[{i}].config: {exc}") from None


def agent_config(spec: AgentSpec):
    if spec.kind == "world_model":
        from commons_lab.world_model.config import TrainConfig
        return TrainConfig.from_dict(spec.config)
    if spec.kind == "pg":
        from commons_lab.model_free.pg import PGConfig
        return PGConfig.from_dict(spec.config)
    if spec.kind == "q":
        from commons_lab.model_free.q import QConfig
        return QConfig.from_dict(spec.config)
    from commons_lab.agents.scripted import ScriptedPolicyConfig
    unknown = set(spec.config) - {"restraint_threshold", "fire_probability"}
    if unknown:
        raise ConfigError(f"unknown scripted config keys: {sorted(unknown)}")
    return ScriptedPolicyConfig(kind=spec.kind, **spec.config)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return ExperimentConfig.from_dict(data, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
