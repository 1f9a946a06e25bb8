"""Run configuration: per-system defaults, presets, validation and round-tripping.

A config file (JSON or YAML) holds any subset of these sections::

    system: dho
    params:   {a: 0.02, k: 1.0}
    datagen:  {n_traj: 40, n_steps: 200, h: 0.05, ...}
    model:    {kind: glnn, hidden_size: 200, n_hidden_layers: 3, ...}
    train:    {learning_rate: 0.001, batch_size: 1000, epochs: 300, ...}
    evaluate: {horizon: 50.0, h: 0.05, inits: [[1.0, 0.0]]}
    sweep:    {hidden_sizes: [50, 100, 200, 400], ...}

Missing values fall back to the defaults of the chosen system; unknown keys
are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from glnn.errors import ConfigError
from glnn.oracles import get_system, params_to_dict
from glnn.training import TrainConfig

PRESETS = ("paper", "smoke")


@dataclass
class DatagenConfig:
    n_traj: int = 40
    n_steps: int = 200
    h: float = 0.05
    init_range: list = field(default_factory=lambda: [-1.0, 1.0])
    seed: int = 0
    substeps: int = 10
    split_ratio: float = 0.5
    split_seed: int = 0


@dataclass
class ModelSection:
    kind: str = "glnn"
    hidden_size: int = 200
    n_hidden_layers: int = 3
    seed: int = 0
    lagrangian_activation: str = "softplus"
    force_activation: str = "tanh"
    baseline_activation: str = "tanh"


@dataclass
class EvaluateConfig:
    horizon: float = 50.0
    h: float = 0.05
    inits: list = field(default_factory=lambda: [[1.0, 0.0]])
    truth_substeps: int = 10
    model_substeps: int = 1


@dataclass
class SweepConfig:
    hidden_sizes: list = field(default_factory=lambda: [50, 100, 200, 400])
    fixed_layers: int = 3
    layer_counts: list = field(default_factory=lambda: [2, 3, 4, 5])
    fixed_hidden: int = 200
    seeds: list = field(default_factory=lambda: [0, 1, 2])


_SYSTEM_DEFAULTS = {
    "dho": {
        "datagen": {"n_traj": 40, "n_steps": 200, "h": 0.05},
        "model": {"n_hidden_layers": 3},
        "evaluate": {"horizon": 50.0, "h": 0.05, "inits": [[1.0, 0.0]]},
        "sweep": {"fixed_layers": 3},
    },
    "dp": {
        "datagen": {"n_traj": 20, "n_steps": 500, "h": 0.02},
        "model": {"n_hidden_layers": 4},
        "evaluate": {"horizon": 10.0, "h": 0.02, "inits": [[1.0, 1.0, 0.0, 0.0]]},
        "sweep": {"fixed_layers": 4},
    },
}


@dataclass
class RunConfig:
    system: str = "dho"
    params: dict = field(default_factory=dict)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def system_params(self):
        return get_system(self.system).make_params(self.params)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "params": params_to_dict(self.system_params()),
            "datagen": dataclasses.asdict(self.datagen),
            "model": dataclasses.asdict(self.model),
            "train": dataclasses.asdict(self.train),
            "evaluate": dataclasses.asdict(self.evaluate),
            "sweep": dataclasses.asdict(self.sweep),
        }

    def validate(self) -> "RunConfig":
        self.system_params()
        d = self.datagen
        if len(d.init_range) != 2 or not float(d.init_range[0]) < float(d.init_range[1]):
            raise ConfigError(f"datagen.init_range must be [min, max] with min < max, got {d.init_range}")
        if d.n_traj < 1 or d.n_steps < 1 or d.substeps < 1 or not d.h > 0:
            raise ConfigError("datagen counts and h must be positive")
        if not 0 < d.split_ratio <= 1:
            raise ConfigError("datagen.split_ratio must be in (0, 1]")
        if self.model.kind not in ("glnn", "baseline"):
            raise ConfigError(f"model.kind must be 'glnn' or 'baseline', got {self.model.kind!r}")
        if self.model.hidden_size < 1 or self.model.n_hidden_layers < 1:
            raise ConfigError("model.hidden_size and model.n_hidden_layers must be positive")
        e = self.evaluate
        if not (e.horizon > 0 and e.h > 0) or e.truth_substeps < 1 or e.model_substeps < 1:
            raise ConfigError("evaluate.horizon, h and substeps must be positive")
        s = self.sweep
        if not s.seeds or not s.hidden_sizes or not s.layer_counts:
            raise ConfigError("sweep grid and seeds must be non-empty")
        return self


def _merge_section(cls, base, overrides, name: str):
    if overrides is None:
        return base
    if not isinstance(overrides, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    values = dataclasses.asdict(base)
    for key, value in overrides.items():
        values[key] = _coerce(value, values[key], f"{name}.{key}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


def _coerce(value, default, where: str):
    """Check ``value`` against the type of its default; ints are accepted for floats."""
    if isinstance(default, bool) or default is None:
        return value
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, (str, list)):
        if isinstance(value, type(default)):
            return value
    else:
        return value
    raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")


_SECTIONS = {
    "datagen": DatagenConfig,
    "model": ModelSection,
    "train": TrainConfig,
    "evaluate": EvaluateConfig,
    "sweep": SweepConfig,
}


def _apply_preset(cfg: RunConfig, preset: str) -> RunConfig:
    if preset == "paper":
        return cfg
    if preset == "smoke":
        cfg.datagen.n_traj = max(1, round(cfg.datagen.n_traj / 10))
        cfg.train = dataclasses.replace(cfg.train, epochs=30)
        return cfg
    raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")


def build_config(raw: dict | None = None, preset: str = "paper", seed: int | None = None) -> RunConfig:
    """System defaults, then the preset, then ``raw``, then a seed override."""
    raw = dict(raw or {})
    top = {"system", "params", *_SECTIONS}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    system = raw.get("system", "dho")
    get_system(system)

    cfg = RunConfig(system=system)
    for name, cls in _SECTIONS.items():
        setattr(cfg, name, _merge_section(cls, getattr(cfg, name), _SYSTEM_DEFAULTS[system].get(name), name))
    cfg = _apply_preset(cfg, preset)
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    cfg.params = dict(params)
    for name, cls in _SECTIONS.items():
        setattr(cfg, name, _merge_section(cls, getattr(cfg, name), raw.get(name), name))
    if seed is not None:
        cfg.datagen.seed = seed
        cfg.model.seed = seed
        cfg.train = dataclasses.replace(cfg.train, seed=seed)
        cfg.sweep.seeds = [seed + i for i in range(len(cfg.sweep.seeds))]
    return cfg.validate()


def load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse config ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path=None, preset: str = "paper", seed: int | None = None) -> RunConfig:
    raw = load_config_file(path) if path is not None else {}
    return build_config(raw, preset, seed)


def dump_config(cfg: RunConfig, path) -> None:
    """Write the effective config; reloading it with preset 'paper' reproduces the run."""
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")

