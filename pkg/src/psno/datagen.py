"""Stable/unstable SMIB dataset generation, normalization and storage.

Each record keeps the physical (unclipped, unnormalized) rotor angle and
speed on the input window [0, tau] and the target window [t_out, t_end].
Labels come from the full-horizon solution sampled on a fixed 1 ms grid, so
datasets that differ only in ``dt`` share parameters, labels and bounds.
"""
from __future__ import annotations

import dataclasses
import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import smib
from .rng import generator
from .smib import (MachineState, SmibParams, StabilityLabel, Trajectory, classify,
                   uniform_grid)

MAGIC = b"NOPSDS01"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """Base class for dataset file problems."""


class MagicMismatchError(DatasetError):
    pass


class TruncatedError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class ConsistencyError(RuntimeError):
    """A sampled record contradicts the stability analysis."""


@dataclass(frozen=True)
class SamplingConfig:
    pm_range: tuple = (0.0, 2.0)
    d_range: tuple = (0.0, 0.135)
    unstable_fraction: float = 0.0
    dt: float = 0.1
    tau: float = 0.2
    t_out: float = 0.3
    t_end: float = 3.1
    n_train: int = 8000
    n_val: int = 1000
    n_test: int = 200
    seed: int = 0
    E: float = smib.REFERENCE_CONSTANTS["E"]
    V: float = smib.REFERENCE_CONSTANTS["V"]
    X: float = smib.REFERENCE_CONSTANTS["X"]
    H: float = smib.REFERENCE_CONSTANTS["H"]
    f0: float = smib.REFERENCE_CONSTANTS["f0"]

    def __post_init__(self):
        object.__setattr__(self, "pm_range", tuple(float(v) for v in self.pm_range))
        object.__setattr__(self, "d_range", tuple(float(v) for v in self.d_range))
        lo, hi = self.pm_range
        if not 0 <= lo <= hi:
            raise ValueError(f"pm_range must be a nonempty non-negative interval, got {self.pm_range}")
        if hi >= self.E * self.V / self.X:
            raise ValueError("pm_range must stay below Pmax = E V / X")
        dlo, dhi = self.d_range
        if not 0 <= dlo <= dhi:
            raise ValueError(f"d_range must be a nonempty non-negative interval, got {self.d_range}")
        if not 0 <= self.unstable_fraction <= 1:
            raise ValueError("unstable_fraction must lie in [0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.tau < self.t_out < self.t_end:
            raise ValueError("windows must satisfy 0 < tau < t_out < t_end")
        for count in (self.n_train, self.n_val, self.n_test):
            if count < 0:
                raise ValueError("split sizes must be non-negative")
        # raises if dt does not divide the windows
        self.input_times()
        self.target_times()

    def input_times(self) -> np.ndarray:
        return uniform_grid(0.0, self.tau, self.dt)

    def target_times(self) -> np.ndarray:
        return uniform_grid(self.t_out, self.t_end, self.dt)

    def split_size(self, split: str) -> int:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}[split]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["pm_range"] = list(self.pm_range)
        out["d_range"] = list(self.d_range)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingConfig":
        return cls(**data)


@dataclass(eq=False)
class TrajectoryRecord:
    params: SmibParams
    label: StabilityLabel
    input: Trajectory
    target: Trajectory


@dataclass(frozen=True)
class NormalizationStats:
    delta_min: float
    delta_max: float
    omega_absmax: float

    def __post_init__(self):
        if not self.delta_max > self.delta_min:
            raise ValueError("degenerate angle range in normalization stats")
        if not self.omega_absmax > 0:
            raise ValueError("degenerate speed range in normalization stats")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(eq=False)
class Dataset:
    config: SamplingConfig
    split: str
    records: list = field(default_factory=list)
    stats: NormalizationStats | None = None

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> list:
        return [r.label for r in self.records]

    def n_unstable(self) -> int:
        return sum(r.label is StabilityLabel.UNSTABLE for r in self.records)

    def manifest(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "split": self.split,
            "config": self.config.to_dict(),
            "stats": self.stats.to_dict() if self.stats else None,
            "input_length": int(self.config.input_times().size),
            "target_length": int(self.config.target_times().size),
            "records": [dict(r.params.as_dict(), label=r.label.value) for r in self.records],
        }

    def arrays(self, stats: NormalizationStats | None = None):
        """Normalized (N, n_in, 2) inputs and (N, n_target, 2) targets."""
        stats = stats or self.stats
        if stats is None:
            raise ValueError("dataset has no normalization statistics")
        n_in = self.config.input_times().size
        n_out = self.config.target_times().size
        inputs = np.empty((len(self.records), n_in, 2))
        targets = np.empty((len(self.records), n_out, 2))
        for i, rec in enumerate(self.records):
            inputs[i], targets[i] = normalize(rec, stats)
        return inputs, targets


@dataclass(eq=False)
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset

    def __iter__(self):
        return iter((self.train, self.val, self.test))


# -- sampling -------------------------------------------------------------------

def _base_params(rng: np.random.Generator, config: SamplingConfig) -> SmibParams:
    pm = rng.uniform(*config.pm_range)
    damping = rng.uniform(*config.d_range)
    return SmibParams(E=config.E, V=config.V, X=config.X, H=config.H, D=damping,
                      f0=config.f0, Pm=pm, Pm1=pm)


def simulate_record(params: SmibParams, config: SamplingConfig) -> TrajectoryRecord:
    """One full-horizon solve, sliced onto the input, target and label grids."""
    initial = MachineState(params.delta0, 0.0)
    sol = smib.solve(params, initial, config.t_end)
    dt = config.dt
    d_in, w_in = sol(config.input_times())
    d_out, w_out = sol(config.target_times())
    d_lab, w_lab = sol(smib.label_grid(config.t_end))
    label = classify(Trajectory(0.0, smib.LABEL_DT, d_lab, w_lab))
    return TrajectoryRecord(params, label,
                            Trajectory(0.0, dt, d_in, w_in),
                            Trajectory(config.t_out, dt, d_out, w_out))


def sample_stable(rng: np.random.Generator, config: SamplingConfig) -> TrajectoryRecord:
    params = _base_params(rng, config)
    upper = smib.pm1_max(params)
    params = params.with_pm1(rng.uniform(0.0, upper))
    record = simulate_record(params, config)
    if record.label is not StabilityLabel.STABLE:
        raise ConsistencyError(f"stable draw lost synchronism: {params}")
    return record


def sample_unstable(rng: np.random.Generator, config: SamplingConfig,
                    max_resamples: int = 1000) -> TrajectoryRecord:
    for _ in range(max_resamples):
        params = _base_params(rng, config)
        pmax = params.pmax
        try:
            bound = smib.instability_lower_bound(params, horizon=config.t_end)
        except smib.ResampleError:
            continue
        for _ in range(max_resamples):
            record = simulate_record(params.with_pm1(rng.uniform(bound, pmax)), config)
            if record.label is StabilityLabel.UNSTABLE:
                return record
        raise ConsistencyError(f"no unstable Pm1 found above bound {bound} for {params}")
    raise ValueError(f"{max_resamples} consecutive resamples without an unstable system; "
                     "check pm_range/d_range")


def _split_id(split: str) -> int:
    return SPLITS.index(split)


def unstable_indices(config: SamplingConfig, split: str) -> np.ndarray:
    n = config.split_size(split)
    k = int(math.floor(config.unstable_fraction * n + 0.5))
    perm = generator(config.seed, _split_id(split), "mix").permutation(n)
    return np.sort(perm[:k])


def generate_record(config: SamplingConfig, split: str, index: int, unstable: bool):
    rng = generator(config.seed, _split_id(split), index)
    return sample_unstable(rng, config) if unstable else sample_stable(rng, config)


def _generate_task(args):
    return generate_record(*args)


def generate_split(config: SamplingConfig, split: str, jobs: int = 1) -> Dataset:
    n = config.split_size(split)
    flagged = set(unstable_indices(config, split).tolist())
    tasks = [(config, split, i, i in flagged) for i in range(n)]
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_generate_task, tasks, chunksize=max(1, n // (4 * jobs))))
    else:
        records = [_generate_task(t) for t in tasks]
    return Dataset(config, split, records)


def compute_stats(train: Dataset) -> NormalizationStats:
    """Ranges of the clipped angle and the speed magnitude over training records."""
    if not train.records:
        raise ValueError("cannot compute statistics of an empty training split")
    dmin, dmax, wmax = math.inf, -math.inf, 0.0
    for rec in train.records:
        for traj in (rec.input, rec.target):
            d = np.minimum(traj.delta, math.pi)
            dmin = min(dmin, float(d.min()))
            dmax = max(dmax, float(d.max()))
            wmax = max(wmax, float(np.abs(traj.omega).max()))
    return NormalizationStats(dmin, dmax, wmax)


def build_dataset(config: SamplingConfig, jobs: int = 1) -> DatasetSplits:
    train = generate_split(config, "train", jobs)
    stats = compute_stats(train)
    splits = [train] + [generate_split(config, s, jobs) for s in ("val", "test")]
    for ds in splits:
        ds.stats = stats
    return DatasetSplits(*splits)


# -- normalization --------------------------------------------------------------

def normalize_channels(delta, omega, stats: NormalizationStats) -> np.ndarray:
    """Stack clipped, scaled angle and speed into a (..., n, 2) array."""
    span = stats.delta_max - stats.delta_min
    if not span > 0 or not stats.omega_absmax > 0:
        raise ValueError("degenerate normalization statistics")
    d = (np.minimum(np.asarray(delta, dtype=np.float64), math.pi) - stats.delta_min) / span
    w = np.asarray(omega, dtype=np.float64) / stats.omega_absmax
    return np.stack([d, w], axis=-1)


def normalize(record: TrajectoryRecord, stats: NormalizationStats):
    return (normalize_channels(record.input.delta, record.input.omega, stats),
            normalize_channels(record.target.delta, record.target.omega, stats))


def denormalize(arrays, stats: NormalizationStats) -> tuple[np.ndarray, np.ndarray]:
    arrays = np.asarray(arrays, dtype=np.float64)
    span = stats.delta_max - stats.delta_min
    if not span > 0 or not stats.omega_absmax > 0:
        raise ValueError("degenerate normalization statistics")
    return arrays[..., 0] * span + stats.delta_min, arrays[..., 1] * stats.omega_absmax


# -- storage -------------------------------------------------------------------

def to_bytes(dataset: Dataset) -> bytes:
    manifest = json.dumps(dataset.manifest(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(manifest)), manifest]
    for rec in dataset.records:
        for arr in (rec.input.delta, rec.input.omega, rec.target.delta, rec.target.omega):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_bytes(to_bytes(dataset))


def from_bytes(data: bytes, source: str = "<bytes>") -> Dataset:
    if len(data) < 8 or data[:8] != MAGIC:
        raise MagicMismatchError(f"{source}: magic mismatch, not a dataset file")
    if len(data) < 12:
        raise TruncatedError(f"{source}: truncated before manifest length")
    (length,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + length:
        raise TruncatedError(f"{source}: truncated manifest")
    manifest = json.loads(data[12:12 + length].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{source}: format version {manifest.get('format_version')} != {FORMAT_VERSION}")
    config = SamplingConfig.from_dict(manifest["config"])
    n_in, n_out = manifest["input_length"], manifest["target_length"]
    per_record = 8 * (2 * n_in + 2 * n_out)
    expected = 12 + length + per_record * len(manifest["records"])
    if len(data) < expected:
        raise TruncatedError(f"{source}: truncated record data")
    if len(data) > expected:
        raise DatasetError(f"{source}: trailing bytes after record data")
    body = np.frombuffer(data, dtype="<f8", offset=12 + length).astype(np.float64)
    records = []
    offset = 0
    for entry in manifest["records"]:
        entry = dict(entry)
        label = StabilityLabel(entry.pop("label"))
        params = SmibParams(**entry)
        chunks = []
        for size in (n_in, n_in, n_out, n_out):
            chunks.append(body[offset:offset + size])
            offset += size
        records.append(TrajectoryRecord(
            params, label,
            Trajectory(0.0, config.dt, chunks[0], chunks[1]),
            Trajectory(config.t_out, config.dt, chunks[2], chunks[3])))
    stats = NormalizationStats(**manifest["stats"]) if manifest["stats"] else None
    return Dataset(config, manifest["split"], records, stats)


def load_dataset(path) -> Dataset:
    return from_bytes(Path(path).read_bytes(), str(path))


def split_paths(directory, stem: str = "dataset") -> dict:
    directory = Path(directory)
    return {s: directory / f"{stem}_{s}.nops" for s in SPLITS}


def same_parameters(a: Dataset, b: Dataset) -> bool:
    """True if both datasets were drawn from identical SMIB parameter sets."""
    if len(a) != len(b):
        return False
    return all(ra.params == rb.params for ra, rb in zip(a.records, b.records))
