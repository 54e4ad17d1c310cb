"""Named parameter collections, initialization and the Adam optimizer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import generator
from .tensor import Tensor, grad


class ParamSet:
    """Ordered-by-name mapping of parameter arrays (float64)."""

    def __init__(self, arrays=None):
        self._arrays = {}
        for name, value in (arrays or {}).items():
            self._arrays[name] = np.asarray(value, dtype=np.float64)

    def names(self) -> list[str]:
        return sorted(self._arrays)

    def __getitem__(self, name):
        return self._arrays[name]

    def __setitem__(self, name, value):
        self._arrays[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name):
        return name in self._arrays

    def __iter__(self):
        return iter(self.names())

    def __len__(self):
        return len(self._arrays)

    def items(self):
        return [(name, self._arrays[name]) for name in self.names()]

    def shapes(self) -> dict:
        return {name: tuple(a.shape) for name, a in self.items()}

    def count(self) -> int:
        return int(sum(a.size for a in self._arrays.values()))

    def copy(self) -> "ParamSet":
        return ParamSet({name: a.copy() for name, a in self._arrays.items()})

    def flatten(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for _, a in self.items()])

    def unflatten(self, flat: np.ndarray) -> "ParamSet":
        out, offset = {}, 0
        for name, a in self.items():
            out[name] = np.asarray(flat[offset: offset + a.size]).reshape(a.shape).copy()
            offset += a.size
        if offset != flat.size:
            raise ValueError("flat vector length does not match parameter count")
        return ParamSet(out)

    def equal(self, other: "ParamSet") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(a, other[name]) for name, a in self.items())


def value_and_grad(fn, params: ParamSet, *args, **kwargs):
    """Evaluate scalar ``fn(tensors, *args)`` and its gradient per parameter."""
    leaves = {name: Tensor(a) for name, a in params.items()}
    out = fn(leaves, *args, **kwargs)
    grads = grad(out, [leaves[name] for name in params.names()])
    return float(out.value), dict(zip(params.names(), grads))


# -- initialization ----------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    """Shape and initialization rule of one parameter.

    kind: "dense" (Glorot uniform), "bias" (zeros) or "spectral"
    (uniform [0, 1/fan_in)).
    """

    name: str
    shape: tuple
    kind: str
    fan_in: int = 1
    fan_out: int = 1


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(specs, seed: int) -> ParamSet:
    out = {}
    for spec in specs:
        if spec.name in out:
            raise ValueError(f"duplicate parameter name {spec.name!r}")
        if spec.kind == "bias":
            out[spec.name] = np.zeros(spec.shape)
            continue
        rng = generator(seed, spec.name)
        if spec.kind == "dense":
            bound = glorot_bound(spec.fan_in, spec.fan_out)
            out[spec.name] = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.kind == "spectral":
            out[spec.name] = rng.uniform(0.0, 1.0, size=spec.shape) / spec.fan_in
        else:
            raise ValueError(f"unknown parameter kind {spec.kind!r}")
    return ParamSet(out)


# -- Adam ---------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: ParamSet, grads: dict):
    """One bias-corrected Adam update. Returns (new params, new state)."""
    step = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - state.beta1**step
    c2 = 1.0 - state.beta2**step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - state.beta1) * g if m is None else state.beta1 * m + (1 - state.beta1) * g
        v = (1 - state.beta2) * g * g if v is None else state.beta2 * v + (1 - state.beta2) * g * g
        m_new[name], v_new[name] = m, v
        new_params[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, step, m_new, v_new)
    return ParamSet(new_params), new_state
