"""JSON run configuration with strict keys.

Sections: sampling, model, training, evaluation, paths, seeds. Every section
is optional; omitted values take the defaults below. The PSNO_SEED
environment variable overrides both the data and training seeds.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import SamplingConfig
from .operators import DeepONetConfig, FNOConfig, LNODEConfig, config_from_dict
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalSettings:
    runs: int = 20
    n_boot: int = 10_000
    fine_dt: float = 5e-5
    sweep_points: int = 101
    sweep_pm: float = 0.4
    sweep_damping: float = 0.05


@dataclass
class Paths:
    data_dir: str = "data"
    out_dir: str = "runs"


@dataclass
class Seeds:
    data: int = 0
    train: int = 0
    bootstrap: int = 0


MODEL_SECTIONS = {"deeponet": DeepONetConfig, "fno": FNOConfig, "lnode": LNODEConfig}


@dataclass
class RunConfig:
    sampling: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    paths: Paths = field(default_factory=Paths)
    seeds: Seeds = field(default_factory=Seeds)

    def sampling_config(self, **overrides) -> SamplingConfig:
        data = dict(self.sampling)
        data["seed"] = self.seeds.data
        data.update({k: v for k, v in overrides.items() if v is not None})
        return SamplingConfig(**data)

    def train_config(self, **overrides) -> TrainConfig:
        data = dict(self.training)
        data["seed"] = self.seeds.train
        data.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**data)

    def model_overrides(self, kind: str) -> dict:
        key = "lnode" if kind.startswith("lnode") else kind
        return dict(self.model.get(key, {}))


def _strict(cls, data, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {unknown}")
    return data


def parse_config(data: dict, env=None) -> RunConfig:
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    try:
        sampling = _strict(SamplingConfig, data.get("sampling", {}), "sampling")
        if "seed" in sampling:
            raise ConfigError("set the data seed under 'seeds', not 'sampling'")
        training = _strict(TrainConfig, data.get("training", {}), "training")
        if "seed" in training:
            raise ConfigError("set the training seed under 'seeds', not 'training'")
        model = data.get("model", {})
        if not isinstance(model, dict):
            raise ConfigError("section 'model' must be an object")
        for key, overrides in model.items():
            if key not in MODEL_SECTIONS:
                raise ConfigError(f"unknown model section {key!r}; expected {sorted(MODEL_SECTIONS)}")
            config_from_dict(MODEL_SECTIONS[key], overrides)
        evaluation = EvalSettings(**_strict(EvalSettings, data.get("evaluation", {}), "evaluation"))
        paths = Paths(**_strict(Paths, data.get("paths", {}), "paths"))
        seeds = Seeds(**_strict(Seeds, data.get("seeds", {}), "seeds"))
        if env.get("PSNO_SEED"):
            seed = int(env["PSNO_SEED"])
            seeds = dataclasses.replace(seeds, data=seed, train=seed)
        cfg = RunConfig(sampling, model, training, evaluation, paths, seeds)
        cfg.sampling_config()
        cfg.train_config()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, env=None) -> RunConfig:
    if path is None:
        return parse_config({}, env)
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data, env)


def defaults_text() -> str:
    """Human-readable dump of every default, shown by ``psno --help``."""
    lines = ["configuration defaults (JSON sections):"]
    lines.append("  sampling: " + json.dumps(
        {k: v for k, v in SamplingConfig().to_dict().items() if k != "seed"}))
    for key, cls in MODEL_SECTIONS.items():
        lines.append(f"  model.{key}: " + json.dumps(
            {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cls()).items()}))
    lines.append("  training: " + json.dumps(
        {k: v for k, v in dataclasses.asdict(TrainConfig()).items() if k != "seed"})
        + " (epochs null = 600 for deeponet, 60 otherwise)")
    for name, cls in (("evaluation", EvalSettings), ("paths", Paths), ("seeds", Seeds)):
        lines.append(f"  {name}: " + json.dumps(dataclasses.asdict(cls())))
    lines.append("  env PSNO_SEED overrides seeds.data and seeds.train")
    return "\n".join(lines)
