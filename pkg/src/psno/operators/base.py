"""Shared plumbing for the operator surrogates."""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from ..datagen import NormalizationStats
from ..numcore import ACTIVATIONS, ParamSet, ParamSpec, Tensor, init_params, no_grad
from ..numcore.checkpoint import load_checkpoint, save_checkpoint

#: Input window end, target window start and end (s).
TAU = 0.2
T_OUT = 0.3
T_END = 3.1


def scaled_time(t, t_out: float = T_OUT, t_end: float = T_END):
    """Map the target window [t_out, t_end] onto [0, 1] (linear beyond it)."""
    return (np.asarray(t, dtype=np.float64) - t_out) / (t_end - t_out)


def dense_specs(prefix: str, widths) -> list[ParamSpec]:
    specs = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        specs.append(ParamSpec(f"{prefix}.{i}.w", (fan_in, fan_out), "dense", fan_in, fan_out))
        specs.append(ParamSpec(f"{prefix}.{i}.b", (fan_out,), "bias"))
    return specs


def mlp(tensors, prefix: str, x: Tensor, n_layers: int, activation: str,
        activate_last: bool = False) -> Tensor:
    act = ACTIVATIONS[activation]
    for i in range(n_layers):
        x = x @ tensors[f"{prefix}.{i}.w"] + tensors[f"{prefix}.{i}.b"]
        if i < n_layers - 1 or activate_last:
            x = act(x)
    return x


def sensor_values(inputs: np.ndarray, input_dt: float, sensor_times) -> np.ndarray:
    """Linearly interpolate (B, n, 2) input windows at the sensor times.

    Returns (B, 2 * n_sensors): all angle sensors, then all speed sensors.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    grid = input_dt * np.arange(inputs.shape[1])
    sensors = np.asarray(sensor_times, dtype=np.float64)
    if sensors.min() < -1e-12 or sensors.max() > grid[-1] + 1e-9:
        raise ValueError("sensor times fall outside the input window")
    out = np.empty((inputs.shape[0], 2 * sensors.size))
    for b in range(inputs.shape[0]):
        out[b, :sensors.size] = np.interp(sensors, grid, inputs[b, :, 0])
        out[b, sensors.size:] = np.interp(sensors, grid, inputs[b, :, 1])
    return out


@dataclasses.dataclass(frozen=True)
class InputScaling:
    """Fixed affine map applied to normalized input windows before the first layer.

    Min-max normalized angles of near-equilibrium records sit in a narrow band
    and speeds near zero, so every model standardizes its inputs with the mean
    and spread of the training inputs, per channel and per input time. The
    (k, 2) shift and scale are given at ``times`` and interpolated linearly
    onto any input grid, which keeps finer input windows consistent. The
    default (empty ``times``) is the identity.
    """

    times: tuple = ()
    shift: tuple = ()
    scale: tuple = ()

    def __post_init__(self):
        k = len(self.times)
        if np.shape(self.shift) not in ((k, 2), (0,)) or np.shape(self.shift) != np.shape(self.scale):
            raise ValueError("input scaling needs a (k, 2) shift and scale for k knot times")
        if k and not np.all(np.asarray(self.scale) > 0):
            raise ValueError("input scales must be positive")

    def apply(self, inputs: np.ndarray, input_dt: float) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if not self.times:
            return inputs
        grid = input_dt * np.arange(inputs.shape[1])
        shift, scale = np.asarray(self.shift), np.asarray(self.scale)
        out = np.empty_like(inputs)
        for ch in range(2):
            sh = np.interp(grid, self.times, shift[:, ch])
            sc = np.interp(grid, self.times, scale[:, ch])
            out[..., ch] = (inputs[..., ch] - sh) / sc
        return out

    def to_dict(self) -> dict:
        return {"times": list(self.times), "shift": [list(r) for r in self.shift],
                "scale": [list(r) for r in self.scale]}

    @classmethod
    def from_dict(cls, data: dict) -> "InputScaling":
        return cls(tuple(data["times"]), tuple(tuple(r) for r in data["shift"]),
                   tuple(tuple(r) for r in data["scale"]))


def fit_input_scaling(inputs: np.ndarray, input_dt: float) -> InputScaling:
    """Mean and standard deviation of (N, n, 2) inputs at each input time."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[0] == 0:
        return InputScaling()
    std = inputs.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    times = tuple(float(t) for t in input_dt * np.arange(inputs.shape[1]))
    as_rows = lambda a: tuple(tuple(float(v) for v in row) for row in a)
    return InputScaling(times, as_rows(inputs.mean(axis=0)), as_rows(std))


@dataclasses.dataclass(frozen=True)
class SensorWhitening:
    """Fixed decorrelating map ``(v - mean) @ matrix`` on sensor vectors.

    The angle sensors of one record are nearly collinear; what tells records
    apart (the early curvature) is a low-variance direction. Whitening with
    the training covariance brings every direction to unit spread. Directions
    with no spread (the speed at t=0 is always 0) map to 0. Empty is identity.
    """

    mean: tuple = ()
    matrix: tuple = ()

    def __post_init__(self):
        m = len(self.mean)
        if np.shape(self.matrix) not in ((m, m), (0,)):
            raise ValueError("whitening needs an (m, m) matrix for an m-vector mean")

    def apply(self, sensors: np.ndarray) -> np.ndarray:
        sensors = np.asarray(sensors, dtype=np.float64)
        if not self.mean:
            return sensors
        if sensors.shape[-1] != len(self.mean):
            raise ValueError(f"whitening fitted for {len(self.mean)} sensors, got {sensors.shape[-1]}")
        return (sensors - np.asarray(self.mean)) @ np.asarray(self.matrix)

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "matrix": [list(r) for r in self.matrix]}

    @classmethod
    def from_dict(cls, data: dict) -> "SensorWhitening":
        return cls(tuple(data["mean"]), tuple(tuple(r) for r in data["matrix"]))


def fit_sensor_whitening(sensors: np.ndarray, rel_tol: float = 1e-10) -> SensorWhitening:
    """ZCA whitening of (N, m) training sensor vectors."""
    sensors = np.asarray(sensors, dtype=np.float64)
    if sensors.shape[0] < 2:
        return SensorWhitening()
    mean = sensors.mean(axis=0)
    w, V = np.linalg.eigh(np.cov(sensors, rowvar=False))
    keep = w > rel_tol * max(float(w.max()), 1e-300)
    inv = np.where(keep, 1.0 / np.sqrt(np.where(keep, w, 1.0)), 0.0)
    matrix = (V * inv) @ V.T
    return SensorWhitening(tuple(float(v) for v in mean),
                           tuple(tuple(float(v) for v in row) for row in matrix))


def check_queries(query_times, t_out: float, t_end: float) -> np.ndarray:
    q = np.asarray(query_times, dtype=np.float64)
    if q.ndim != 1 or q.size < 1:
        raise ValueError("query times must be a non-empty 1-d array")
    if q.min() < t_out - 1e-9 or q.max() > t_end + 1e-9:
        raise ValueError(f"query times must lie in the target window [{t_out}, {t_end}]")
    return q


class OperatorModel:
    """Common surface: ``predict(inputs, input_dt, query_times)``.

    ``inputs`` are normalized (B, n_in, 2) windows on [0, tau] with spacing
    ``input_dt``; the result is normalized (B, q, 2) at ``query_times``.
    Subclasses define ``kind``, ``param_specs`` and ``forward``.
    """

    kind: str = ""
    config_class = None

    def __init__(self, config=None, params: ParamSet | None = None,
                 norm_stats: NormalizationStats | None = None, seed: int = 0,
                 input_scaling: InputScaling | None = None,
                 sensor_whitening: SensorWhitening | None = None):
        self.config = config if config is not None else self.config_class()
        self.seed = seed
        self.params = params if params is not None else init_params(self.param_specs(), seed)
        self.norm_stats = norm_stats
        self.input_scaling = input_scaling or InputScaling()
        self.sensor_whitening = sensor_whitening or SensorWhitening()

    @property
    def kind_name(self) -> str:
        return self.kind

    def param_specs(self) -> list[ParamSpec]:
        raise NotImplementedError

    def forward(self, tensors, inputs, input_dt, query_times, **kw) -> Tensor:
        raise NotImplementedError

    def scale_inputs(self, inputs, input_dt: float) -> np.ndarray:
        return self.input_scaling.apply(inputs, input_dt)

    def fitted(self, inputs, input_dt: float) -> "OperatorModel":
        """Copy with the input standardization fitted to training inputs."""
        return self._copy(input_scaling=fit_input_scaling(inputs, input_dt))

    def _copy(self, **changes) -> "OperatorModel":
        state = dict(config=self.config, params=self.params, norm_stats=self.norm_stats,
                     seed=self.seed, input_scaling=self.input_scaling,
                     sensor_whitening=self.sensor_whitening)
        state.update(changes)
        return type(self)(**state)

    def count_params(self) -> int:
        return sum(int(np.prod(s.shape)) for s in self.param_specs())

    def tensors(self, params: ParamSet | None = None) -> dict:
        params = params if params is not None else self.params
        return {name: Tensor(a) for name, a in params.items()}

    def predict(self, inputs, input_dt: float, query_times, batch_size: int = 64) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        out = []
        with no_grad():
            tensors = self.tensors()
            for start in range(0, inputs.shape[0], batch_size):
                chunk = inputs[start:start + batch_size]
                out.append(self.forward(tensors, chunk, input_dt, query_times).value)
        return np.concatenate(out, axis=0) if out else np.zeros((0, len(query_times), 2))

    def with_params(self, params: ParamSet) -> "OperatorModel":
        return self._copy(params=params)

    # -- persistence --------------------------------------------------------------
    def header(self, **metadata) -> dict:
        return {
            "kind": self.kind_name,
            "config": config_to_dict(self.config),
            "seed": self.seed,
            "norm_stats": self.norm_stats.to_dict() if self.norm_stats else None,
            "input_scaling": self.input_scaling.to_dict(),
            "sensor_whitening": self.sensor_whitening.to_dict(),
            "training": metadata,
        }

    def save(self, path, **metadata) -> None:
        save_checkpoint(path, self.params, self.header(**metadata))


class SensorModel(OperatorModel):
    """A model whose input is the sensor vector at ``config.sensor_times``."""

    def sensor_features(self, inputs, input_dt: float) -> np.ndarray:
        raw = sensor_values(self.scale_inputs(inputs, input_dt), input_dt, self.config.sensor_times)
        return self.sensor_whitening.apply(raw)

    def fitted(self, inputs, input_dt: float) -> "OperatorModel":
        raw = sensor_values(inputs, input_dt, self.config.sensor_times)
        return self._copy(input_scaling=InputScaling(), sensor_whitening=fit_sensor_whitening(raw))


def config_to_dict(config) -> dict:
    out = dataclasses.asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def config_from_dict(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


def load_model(path) -> tuple[OperatorModel, dict]:
    from . import build_model

    params, header = load_checkpoint(Path(path))
    stats = NormalizationStats(**header["norm_stats"]) if header.get("norm_stats") else None
    scaling = header.get("input_scaling")
    scaling = InputScaling.from_dict(scaling) if scaling else None
    whitening = header.get("sensor_whitening")
    whitening = SensorWhitening.from_dict(whitening) if whitening else None
    model = build_model(header["kind"], header["config"], params=params, norm_stats=stats,
                        seed=header.get("seed", 0), input_scaling=scaling,
                        sensor_whitening=whitening)
    return model, header
