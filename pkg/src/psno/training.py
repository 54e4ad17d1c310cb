"""Relative H1 loss and the mini-batch Adam training loop."""
from __future__ import annotations

import csv
import functools
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import DatasetSplits
from .numcore import AdamState, Tensor, adam_step, no_grad, value_and_grad
from .numcore.tensor import matmul, mean, sqrt, tsum
from .operators import build_model, count_params, within_budget
from .rng import generator

#: Loss variants, named in every report header. "h1" pools both channels of a
#: sample under one denominator; "h1-channel" takes the relative error per
#: channel and averages. The per-channel form lets near-equilibrium records,
#: whose normalized speed is ~1e-3, dominate the gradient, so it is opt-in.
LOSSES = {
    "h1": "relative discrete H1 error, channels pooled per sample, mean over samples",
    "h1-channel": "relative discrete H1 error, mean over channels and samples",
}
LOSS_DESCRIPTION = LOSSES["h1"]
H1_EPS = 1e-12

DEFAULT_EPOCHS = {"deeponet": 600, "fno": 60, "lnode-fixed": 60, "lnode-adaptive": 60}


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, batch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class BudgetError(ValueError):
    pass


@functools.lru_cache(maxsize=16)
def derivative_matrix(n: int, dt: float) -> np.ndarray:
    """Finite-difference d/dt: central inside, one-sided at the ends."""
    if n < 2:
        raise ValueError("derivative needs at least 2 points")
    D = np.zeros((n, n))
    D[0, 0], D[0, 1] = -1.0, 1.0
    D[-1, -2], D[-1, -1] = -1.0, 1.0
    D[0] /= dt
    D[-1] /= dt
    for j in range(1, n - 1):
        D[j, j - 1], D[j, j + 1] = -0.5 / dt, 0.5 / dt
    return D


def h1_loss(pred, target, dt: float, pooled: bool = True):
    """Relative H1 error between (B, n, C) or (n, C) predictions and targets.

    Per sample: sqrt(|e|^2 + |e'|^2) / sqrt(|u|^2 + |u'|^2 + eps) with
    |v|^2 = dt * sum v_j^2 summed over channels, then averaged over samples.
    With ``pooled=False`` the ratio is taken per channel and averaged over
    channels first. Returns a Tensor when ``pred`` is one, a float otherwise.
    """
    target = np.asarray(target, dtype=np.float64)
    as_float = not isinstance(pred, Tensor)
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if target.ndim == 2:
        pred = pred.reshape(1, *pred.shape)
        target = target[None]
    n = target.shape[1]
    if n < 2:
        raise ValueError("h1_loss needs at least 2 time points")
    D = derivative_matrix(n, float(dt))
    err = pred - target
    derr = matmul(D, err)
    num = tsum(err * err + derr * derr, axis=1) * dt
    dtarget = D @ target
    den = dt * np.sum(target * target + dtarget * dtarget, axis=1)
    if pooled:
        num, den = tsum(num, axis=1), np.sum(den, axis=1)
    loss = mean(sqrt(num / (den + H1_EPS)))
    return float(loss.value) if as_float else loss


@dataclass
class TrainConfig:
    epochs: int | None = None
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    allow_any_size: bool = False
    loss: str = "h1"

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {sorted(LOSSES)}, got {self.loss!r}")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    kind: str
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    seconds: float = 0.0
    param_count: int = 0
    initial_train_loss: float = math.nan
    loss: str = "h1"

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# model={self.kind} params={self.param_count} best_epoch={self.best_epoch}\n")
        buf.write(f"# loss={LOSSES[self.loss]}\n")
        buf.write(f"# initial_train_loss={self.initial_train_loss!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            writer.writerow([i, repr(tr), repr(va)])
        return buf.getvalue()


def evaluate_loss(model, inputs, targets, input_dt, query, dt, batch_size=64,
                  pooled: bool = True) -> float:
    """Sample-weighted mean H1 loss over a whole split."""
    total = 0.0
    with no_grad():
        tensors = model.tensors()
        for start in range(0, inputs.shape[0], batch_size):
            x = inputs[start:start + batch_size]
            y = targets[start:start + batch_size]
            pred = model.forward(tensors, x, input_dt, query).value
            total += h1_loss(pred, y, dt, pooled) * x.shape[0]
    return total / max(inputs.shape[0], 1)


def train(kind: str, splits: DatasetSplits, train_config: TrainConfig | None = None,
          model_config=None, checkpoint_path=None, log=None):
    """Fit one model; returns (model at best validation epoch, TrainReport)."""
    tc = train_config or TrainConfig()
    train_ds, val_ds = splits.train, splits.val
    stats = train_ds.stats
    if stats is None:
        raise ValueError("training split carries no normalization statistics")
    n_params = count_params(kind, model_config)
    if not tc.allow_any_size and not within_budget(n_params):
        raise BudgetError(f"{kind} has {n_params} parameters, outside 700k +/- 10%")
    epochs = tc.epochs or DEFAULT_EPOCHS[kind]
    pooled = tc.loss == "h1"

    cfg = train_ds.config
    query = cfg.target_times()
    x_train, y_train = train_ds.arrays(stats)
    x_val, y_val = val_ds.arrays(stats)
    if x_train.shape[0] == 0:
        raise ValueError("empty training split")
    model = build_model(kind, model_config, norm_stats=stats, seed=tc.seed).fitted(x_train, cfg.dt)

    def batch_loss(tensors, x, y):
        return h1_loss(model.forward(tensors, x, cfg.dt, query), y, cfg.dt, pooled)

    def split_loss(m, x, y):
        return evaluate_loss(m, x, y, cfg.dt, query, cfg.dt, pooled=pooled)

    params = model.params
    state = AdamState(tc.lr, tc.beta1, tc.beta2, tc.eps)
    report = TrainReport(kind, param_count=n_params, loss=tc.loss)
    best_params, best_val = params, math.inf
    started = time.perf_counter()
    report.initial_train_loss = split_loss(model, x_train, y_train)
    for epoch in range(1, epochs + 1):
        order = generator(tc.seed, "shuffle", epoch).permutation(x_train.shape[0])
        total = 0.0
        for b, start in enumerate(range(0, order.size, tc.batch_size)):
            idx = order[start:start + tc.batch_size]
            loss, grads = value_and_grad(batch_loss, params, x_train[idx], y_train[idx])
            if not math.isfinite(loss):
                raise TrainingError(epoch, b)
            params, state = adam_step(state, params, grads)
            total += loss * idx.size
        model = model.with_params(params)
        val = split_loss(model, x_val, y_val) if len(val_ds) else total / order.size
        if not math.isfinite(val):
            raise TrainingError(epoch, -1, "non-finite validation loss")
        report.train_loss.append(total / order.size)
        report.val_loss.append(val)
        if val < best_val:
            best_val, best_params, report.best_epoch = val, params, epoch
        if log:
            log(f"{kind} epoch {epoch}/{epochs} train {report.train_loss[-1]:.6f} val {val:.6f}")
    report.seconds = time.perf_counter() - started
    best = model.with_params(best_params)
    if checkpoint_path is not None:
        best.save(checkpoint_path, best_epoch=report.best_epoch, best_val_loss=best_val,
                  epochs=epochs, batch_size=tc.batch_size, lr=tc.lr, seed=tc.seed,
                  loss=LOSSES[tc.loss])
    return best, report
