"""Error metrics and the two benchmark experiments.

* zero-shot super-resolution: train on the 100 ms grid, score on the 100 ms
  and 50 us test grids without retraining (RMSE, percent difference);
* regime sweep: MASE over a sweep of the post-disturbance power for models
  trained with and without unstable trajectories.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import smib
from .datagen import (Dataset, DatasetSplits, SamplingConfig, denormalize, normalize_channels,
                      same_parameters, simulate_record)
from .operators import model_kind
from .rng import generator
from .smib import SmibParams, StabilityLabel
from .training import TrainConfig, train

MASE_EPS = 1e-12


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def mase_terms(pred, target) -> tuple[float, float]:
    """(mean absolute error, mean absolute one-step change of the target).

    Both means run over time points 2..n, the points where the previous-step
    baseline makes a forecast, so the persistence predictor scores exactly 1.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if target.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    if target.shape[-2] < 2:
        raise ValueError("mase needs at least 2 time points")
    num = float(np.mean(np.abs(pred - target)[..., 1:, :]))
    den = float(np.mean(np.abs(np.diff(target, axis=-2))))
    return num, den


def mase(pred, target, eps: float = MASE_EPS) -> float:
    """Mean absolute error scaled by the previous-step persistence error.

    ``pred``/``target`` are (n, C) or (n,); the time axis is -2.
    """
    num, den = mase_terms(pred, target)
    return num / max(den, eps)


def standard_error(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def percent_difference(coarse, fine, n_boot: int = 10_000, seed: int = 0,
                       level: float = 0.95) -> tuple[float, float, float]:
    """100 (mean fine - mean coarse) / mean coarse with a paired bootstrap CI."""
    coarse = np.asarray(coarse, dtype=np.float64)
    fine = np.asarray(fine, dtype=np.float64)
    if coarse.shape != fine.shape or coarse.ndim != 1 or coarse.size == 0:
        raise ValueError("coarse and fine need equal, non-empty run counts")
    if coarse.mean() == 0:
        raise ZeroDivisionError("mean coarse RMSE is zero")
    point = 100.0 * (fine.mean() - coarse.mean()) / coarse.mean()
    idx = generator(seed, "bootstrap").integers(0, coarse.size, size=(n_boot, coarse.size))
    c = coarse[idx].mean(axis=1)
    f = fine[idx].mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        stats = 100.0 * (f - c) / c
    stats = stats[np.isfinite(stats)]
    alpha = (1.0 - level) / 2
    lo, hi = np.percentile(stats, [100 * alpha, 100 * (1 - alpha)])
    # the percentile of a resampled statistic can sit a rounding error off a
    # degenerate point estimate
    return float(point), float(min(lo, point)), float(max(hi, point))


# -- zero-shot super-resolution -------------------------------------------------

class OracleModel:
    """Stub predictor returning the stored targets; a pipeline null test."""

    kind_name = "oracle"

    def __init__(self, *datasets: Dataset):
        self.norm_stats = datasets[0].stats
        self._lookup = {}
        for ds in datasets:
            inputs, targets = ds.arrays(self.norm_stats)
            for x, y in zip(inputs, targets):
                self._lookup[(x.shape, x.tobytes())] = y

    def predict(self, inputs, input_dt, query_times, batch_size=None):
        out = []
        for x in np.asarray(inputs, dtype=np.float64):
            y = self._lookup[(x.shape, x.tobytes())]
            if y.shape[0] != len(query_times):
                raise ValueError("oracle only answers on the stored target grid")
            out.append(y)
        return np.stack(out)


def _kind(model) -> str:
    return getattr(model, "kind_name", None) or model_kind(model)


def split_rmse(model, dataset: Dataset) -> float:
    """RMSE on a test split, in the model's normalized units."""
    stats = model.norm_stats
    inputs, targets = dataset.arrays(stats)
    pred = model.predict(inputs, dataset.config.dt, dataset.config.target_times())
    return rmse(pred, targets)


@dataclass
class SuperResRow:
    model: str
    coarse_rmse: list
    fine_rmse: list
    pct_diff: float
    ci_low: float
    ci_high: float

    @property
    def coarse_mean(self):
        return float(np.mean(self.coarse_rmse))

    @property
    def fine_mean(self):
        return float(np.mean(self.fine_rmse))


@dataclass
class SuperResReport:
    rows: list = field(default_factory=list)
    runs: int = 0
    trajectories: int = 0

    COLUMNS = ("model", "coarse_rmse_mean", "coarse_rmse_se", "fine_rmse_mean",
               "fine_rmse_se", "pct_diff", "ci_low", "ci_high")

    def row(self, model: str) -> SuperResRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            writer.writerow([r.model, repr(r.coarse_mean), repr(standard_error(r.coarse_rmse)),
                             repr(r.fine_mean), repr(standard_error(r.fine_rmse)),
                             repr(r.pct_diff), repr(r.ci_low), repr(r.ci_high)])
        return buf.getvalue()

    def table(self) -> str:
        lines = ["| Model | dt=100ms (RMSE) | dt=50us (RMSE) | Percent Difference |",
                 "|---|---|---|---|"]
        for r in self.rows:
            lines.append(
                f"| {r.model} | {r.coarse_mean:.4f} ± {standard_error(r.coarse_rmse):.4f} "
                f"| {r.fine_mean:.4f} ± {standard_error(r.fine_rmse):.4f} "
                f"| {r.pct_diff:.1f} ({r.ci_low:.1f}, {r.ci_high:.1f}) |")
        return "\n".join(lines) + "\n"


def check_resolution_pair(coarse: Dataset, fine: Dataset) -> None:
    if coarse.config.seed != fine.config.seed or not same_parameters(coarse, fine):
        raise ValueError("datasets must share SMIB parameters (same seed and draws)")


def evaluate_superres(models: dict, coarse_test: Dataset, fine_test: Dataset,
                      n_boot: int = 10_000, seed: int = 0) -> SuperResReport:
    """Score already-trained models; ``models`` maps a name to a list of runs."""
    check_resolution_pair(coarse_test, fine_test)
    report = SuperResReport(trajectories=len(coarse_test))
    for name, runs in models.items():
        coarse = [split_rmse(m, coarse_test) for m in runs]
        fine = [split_rmse(m, fine_test) for m in runs]
        if np.mean(coarse) == 0:
            # exact predictor: relative change undefined
            point = lo = hi = math.nan
        else:
            point, lo, hi = percent_difference(coarse, fine, n_boot, seed)
        report.rows.append(SuperResRow(name, coarse, fine, point, lo, hi))
        report.runs = max(report.runs, len(runs))
    return report


def superres_experiment(kind: str, coarse: DatasetSplits, fine_test: Dataset, runs: int = 20,
                        train_config: TrainConfig | None = None, model_config=None,
                        n_boot: int = 10_000, log=None):
    """Train ``runs`` seeds on the coarse split and score both resolutions.

    Returns (SuperResReport, trained models).
    """
    tc = train_config or TrainConfig()
    models = []
    for run in range(runs):
        model, _ = train(kind, coarse, dataclasses.replace(tc, seed=tc.seed + run),
                         model_config=model_config, log=log)
        models.append(model)
    return evaluate_superres({kind: models}, coarse.test, fine_test, n_boot), models


# -- regime sweep -------------------------------------------------------------

SWEEP_PM = 0.4
SWEEP_D = 0.05


@dataclass
class SweepConfig:
    pm: float = SWEEP_PM
    damping: float = SWEEP_D
    points: int = 101
    dt: float = 0.1
    tau: float = 0.2
    t_out: float = 0.3
    t_end: float = 3.1


@dataclass
class SweepReport:
    pm1: np.ndarray
    mase: dict              # kind -> {"mix0": (P,) array, "mix20": (P,) array}
    degenerate: np.ndarray  # (P,) bool
    unstable: np.ndarray    # (P,) bool, ground-truth label
    pm: float
    threshold: float

    def unstable_region(self) -> np.ndarray:
        return self.pm1 > self.threshold

    def mean_unstable_mase(self, kind: str, mix: str) -> float:
        values = self.mase[kind][mix][self.unstable_region()]
        return float(np.nanmean(values))

    def flags(self, i: int) -> str:
        out = []
        if self.degenerate[i]:
            out.append("degenerate")
        if math.isclose(self.pm1[i], self.pm, abs_tol=1e-12):
            out.append("no_disturbance")
        if self.unstable[i]:
            out.append("unstable")
        return ";".join(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# marker_pm={self.pm!r}\n# marker_threshold={self.threshold!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "pm1", "mase_mix0", "mase_mix20", "flags"])
        for kind, series in self.mase.items():
            for i, p in enumerate(self.pm1):
                cells = []
                for mix in ("mix0", "mix20"):
                    v = series.get(mix)
                    cells.append("" if v is None or not np.isfinite(v[i]) else repr(float(v[i])))
                writer.writerow([kind, repr(float(p)), *cells, self.flags(i)])
        return buf.getvalue()


def sweep_grid(pm: float, pmax: float, points: int) -> np.ndarray:
    """Uniform grid on [0, pmax] with the no-disturbance point pm inserted."""
    grid = np.linspace(0.0, pmax, points)
    return np.unique(np.append(grid, pm))


def sweep_truth(config: SweepConfig):
    """Ground-truth records along the sweep plus the instability marker."""
    base = SmibParams.reference(config.pm, config.pm, config.damping)
    sampling = SamplingConfig(dt=config.dt, tau=config.tau, t_out=config.t_out,
                              t_end=config.t_end, n_train=0, n_val=0, n_test=0)
    grid = sweep_grid(config.pm, base.pmax, config.points)
    records = [simulate_record(base.with_pm1(float(p)), sampling) for p in grid]
    threshold = smib.instability_lower_bound(base, horizon=config.t_end)
    return grid, records, threshold, sampling


def regime_sweep(models_mix0: dict, models_mix20: dict, config: SweepConfig | None = None) -> SweepReport:
    """MASE along the Pm1 sweep, averaged over runs, for each kind and mix.

    Errors are measured in physical units (angle clipped at pi) so models with
    different normalization statistics are compared on the same scale.
    """
    config = config or SweepConfig()
    grid, records, threshold, sampling = sweep_truth(config)
    query = sampling.target_times()
    truth = [np.stack([np.minimum(r.target.delta, math.pi), r.target.omega], axis=-1)
             for r in records]
    denominators = np.array([mase_terms(t, t)[1] for t in truth])
    degenerate = denominators <= MASE_EPS
    unstable = np.array([r.label is StabilityLabel.UNSTABLE for r in records])

    result = {}
    for mix, table in (("mix0", models_mix0), ("mix20", models_mix20)):
        for kind, runs in table.items():
            per_run = []
            for model in runs:
                stats = model.norm_stats
                inputs = np.stack([normalize_channels(r.input.delta, r.input.omega, stats)
                                   for r in records])
                pred = model.predict(inputs, config.dt, query)
                d, w = denormalize(pred, stats)
                phys = np.stack([d, w], axis=-1)
                per_run.append([np.nan if degenerate[i] else mase(phys[i], truth[i])
                                for i in range(len(records))])
            result.setdefault(kind, {})[mix] = np.mean(np.asarray(per_run), axis=0)
    return SweepReport(grid, result, degenerate, unstable, config.pm, threshold)
