"""Differentiable ODE solvers for batched states.

Both solvers only use ``+``, ``-`` and scalar ``*`` on states, so they run on
plain arrays as well as on ``Tensor`` objects; with tensors the recorded
graph is the exact discrete computation (discretize-then-differentiate).
"""
from __future__ import annotations

import math

import numpy as np

from ..smib import DENSE_P, IntegrationError, _A2, _A3, _A4, _A5, _A6, _B, _C, _E
from .tensor import Tensor, as_tensor, concat, reshape, stack, take


def _value(z) -> np.ndarray:
    return z.value if isinstance(z, Tensor) else np.asarray(z)


def step_count(t0: float, t_end: float, h: float) -> int:
    count = (t_end - t0) / h
    nearest = round(count)
    if abs(count - nearest) < 1e-9:
        return max(int(nearest), 1)
    return max(int(math.ceil(count)), 1)


def rk4_step(f, t, z, h):
    k1 = f(t, z)
    k2 = f(t + h / 2, z + (h / 2) * k1)
    k3 = f(t + h / 2, z + (h / 2) * k2)
    k4 = f(t + h, z + h * k3)
    return z + (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def adams_bashforth4(f, z0, t0: float, t_end: float, h: float):
    """Explicit 4-step Adams-Bashforth on the grid t0 + i*h covering [t0, t_end].

    The first three steps come from classical RK4. Returns (times, states).
    """
    n = step_count(t0, t_end, h)
    times = t0 + h * np.arange(n + 1)
    states = [z0]
    derivs = [f(times[0], z0)]
    for i in range(min(3, n)):
        states.append(rk4_step(f, times[i], states[-1], h))
        derivs.append(f(times[i + 1], states[-1]))
    for i in range(3, n):
        f0, f1, f2, f3 = derivs[-1], derivs[-2], derivs[-3], derivs[-4]
        states.append(states[-1] + (h / 24) * (55.0 * f0 - 59.0 * f1 + 37.0 * f2 - 9.0 * f3))
        derivs.append(f(times[i + 1], states[-1]))
    return times, states


def interp_linear(times: np.ndarray, states, query: np.ndarray):
    """Piecewise-linear interpolation of stacked (B, d) states at query times.

    Returns a (B, q, d) tensor.
    """
    query = np.asarray(query, dtype=np.float64)
    traj = stack(states, axis=1)                       # (B, S, d)
    h = times[1] - times[0] if len(times) > 1 else 1.0
    pos = (query - times[0]) / h
    idx = np.clip(np.floor(pos + 1e-9).astype(int), 0, len(times) - 2 if len(times) > 1 else 0)
    frac = np.clip(pos - idx, 0.0, 1.0)
    if len(times) == 1:
        return take(traj, np.zeros(query.size, dtype=int), axis=1)
    lo = take(traj, idx, axis=1)
    hi = take(traj, idx + 1, axis=1)
    w = frac[None, :, None]
    return lo * (1.0 - w) + hi * w


class DopriSolution:
    """Accepted steps of an adaptive Dormand-Prince run and their dense output."""

    def __init__(self, t, h, ys, ks, t_end):
        self.t = np.asarray(t)
        self.h = np.asarray(h)
        self.ys = ys
        self.ks = ks
        self.t_end = t_end

    @property
    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.h.tolist()))

    def __call__(self, query) -> Tensor:
        """States at the query times as a (B, q, d) tensor."""
        query = np.asarray(query, dtype=np.float64)
        idx = np.clip(np.searchsorted(self.t, query, side="right") - 1, 0, len(self.t) - 1)
        order = np.argsort(idx, kind="stable")
        pieces = []
        for i in np.unique(idx):
            sel = query[idx == i]
            theta = np.clip((sel - self.t[i]) / self.h[i], 0.0, 1.0)
            powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)   # (q, 4)
            y0 = self.ys[i]
            acc = None
            for j, k in enumerate(self.ks[i]):
                weights = powers @ DENSE_P[j]
                if not np.any(weights):
                    continue
                term = reshape(k, (k.shape[0], 1, k.shape[1])) * (self.h[i] * weights[None, :, None])
                acc = term if acc is None else acc + term
            base = reshape(y0, (y0.shape[0], 1, y0.shape[1]))
            pieces.append(base + acc if acc is not None else base * np.ones((1, sel.size, 1)))
        out = concat(pieces, axis=1) if len(pieces) > 1 else pieces[0]
        if np.any(order != np.arange(order.size)):
            out = take(out, np.argsort(order), axis=1)
        return out


def dopri5(f, z0, t0: float, t_end: float, *, rtol: float = 1e-6, atol: float = 1e-8,
           first_step: float = 0.01, max_step: float = math.inf, steps=None,
           max_steps: int = 100_000) -> DopriSolution:
    """Adaptive Dormand-Prince 5(4) with Shampine's quartic dense output.

    The error norm is the RMS over every component of the batch, so one step
    sequence serves the whole batch. Passing ``steps`` (pairs of (t, h)) replays
    a recorded step sequence without error control.
    """
    z0 = as_tensor(z0)
    A = (_A2, _A3, _A4, _A5, _A6, _B[:6])
    ts, hs, ys, ks = [], [], [], []

    def attempt(t, z, k1, h):
        stages = [k1]
        for a, c in zip(A, _C[1:]):
            inc = None
            for aj, kj in zip(a, stages):
                if aj == 0:
                    continue
                inc = kj * aj if inc is None else inc + kj * aj
            znew = z + h * inc
            if c == 1.0 and len(stages) == 6:
                stages.append(f(t + h, znew))
                return znew, stages
            stages.append(f(t + c * h, znew))
        raise AssertionError("unreachable")

    t = t0
    z = z0
    k1 = f(t, z)
    if steps is not None:
        for ts_, h in steps:
            znew, stages = attempt(ts_, z, k1, h)
            ts.append(ts_), hs.append(h), ys.append(z), ks.append(stages)
            z, k1 = znew, stages[-1]
        return DopriSolution(ts, hs, ys, ks, t_end)

    h = min(first_step, max_step, t_end - t0)
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        if len(ts) >= max_steps:
            raise IntegrationError(t, "too many steps")
        h = min(h, t_end - t)
        while True:
            znew, stages = attempt(t, z, k1, h)
            err_vec = sum(_value(k) * e for k, e in zip(stages, _E) if e != 0) * h
            scale = atol + rtol * np.maximum(np.abs(_value(z)), np.abs(_value(znew)))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            if not math.isfinite(err):
                raise IntegrationError(t, "non-finite latent state")
            if err <= 1.0:
                break
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < 1e-12 * max(1.0, abs(t)):
                raise IntegrationError(t)
        ts.append(t), hs.append(h), ys.append(z), ks.append(stages)
        t = t + h
        z, k1 = znew, stages[-1]
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(h * factor, max_step)
    return DopriSolution(ts, hs, ys, ks, t_end)
