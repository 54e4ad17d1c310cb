"""DeepONet, FNO and latent-ODE surrogates behind one ``predict`` interface."""
from __future__ import annotations

import dataclasses

from .base import (TAU, T_END, T_OUT, InputScaling, OperatorModel, SensorWhitening,
                   config_from_dict, config_to_dict, fit_input_scaling, fit_sensor_whitening,
                   load_model, scaled_time, sensor_values)
from .deeponet import DeepONet, DeepONetConfig
from .fno import FNO, FNOConfig, fno_input
from .lnode import LNODE, LNODEConfig

#: CLI-facing model kinds. The two latent-ODE kinds share one architecture.
KINDS = ("deeponet", "fno", "lnode-fixed", "lnode-adaptive")

PARAM_BUDGET = 700_000
BUDGET_TOLERANCE = 0.10


def _resolve(kind: str):
    if kind == "deeponet":
        return DeepONet, DeepONetConfig, {}
    if kind == "fno":
        return FNO, FNOConfig, {}
    if kind in ("lnode-fixed", "lnode-adaptive"):
        return LNODE, LNODEConfig, {"solver": kind.split("-")[1]}
    if kind == "lnode":
        return LNODE, LNODEConfig, {}
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def model_kind(model: OperatorModel) -> str:
    return model.kind_name


def make_config(kind: str, overrides: dict | None = None):
    _, config_cls, forced = _resolve(kind)
    data = dict(overrides or {})
    data.update(forced)
    return config_from_dict(config_cls, data)


def build_model(kind: str, config=None, params=None, norm_stats=None, seed: int = 0,
                input_scaling=None, sensor_whitening=None) -> OperatorModel:
    cls, config_cls, forced = _resolve(kind)
    if config is None or isinstance(config, dict):
        config = make_config(kind, config)
    elif forced:
        config = dataclasses.replace(config, **forced)
    return cls(config, params=params, norm_stats=norm_stats, seed=seed,
               input_scaling=input_scaling, sensor_whitening=sensor_whitening)


def count_params(kind: str, config=None) -> int:
    """Exact scalar parameter count of a model kind at a configuration."""
    cls, _, _ = _resolve(kind)
    if config is None or isinstance(config, dict):
        config = make_config(kind, config)
    shell = cls.__new__(cls)
    shell.config = config
    return shell.count_params()


def within_budget(count: int, budget: int = PARAM_BUDGET, tol: float = BUDGET_TOLERANCE) -> bool:
    return abs(count - budget) <= tol * budget


__all__ = [
    "FNO", "InputScaling", "KINDS", "LNODE", "SensorWhitening", "PARAM_BUDGET", "TAU", "T_END", "T_OUT", "DeepONet",
    "DeepONetConfig", "FNOConfig", "LNODEConfig", "OperatorModel", "build_model",
    "config_from_dict", "config_to_dict", "count_params", "fit_input_scaling", "fit_sensor_whitening", "fno_input",
    "load_model",
    "make_config", "model_kind", "scaled_time", "sensor_values", "within_budget",
]
