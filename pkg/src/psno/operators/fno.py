"""1-d Fourier neural operator over the query grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import ACTIVATIONS, ParamSpec, Tensor, spectral_conv
from .base import T_END, T_OUT, OperatorModel, check_queries, dense_specs, mlp, scaled_time


@dataclass(frozen=True)
class FNOConfig:
    width: int = 80
    layers: int = 4
    modes: int = 14
    activation: str = "gelu"
    projection_widths: tuple = (128,)
    t_out: float = T_OUT
    t_end: float = T_END


def fno_input(inputs: np.ndarray, input_dt: float, query_times, t_out=T_OUT, t_end=T_END):
    """(B, n, 3) signal: input window resampled onto n points, plus scaled time."""
    inputs = np.asarray(inputs, dtype=np.float64)
    q = np.asarray(query_times, dtype=np.float64)
    n = q.size
    grid = input_dt * np.arange(inputs.shape[1])
    positions = np.linspace(0.0, grid[-1], n)
    out = np.empty((inputs.shape[0], n, 3))
    for b in range(inputs.shape[0]):
        out[b, :, 0] = np.interp(positions, grid, inputs[b, :, 0])
        out[b, :, 1] = np.interp(positions, grid, inputs[b, :, 1])
    out[:, :, 2] = scaled_time(q, t_out, t_end)[None, :]
    return out


class FNO(OperatorModel):
    kind = "fno"
    config_class = FNOConfig

    def param_specs(self):
        c = self.config
        specs = dense_specs("lift", [3, c.width])
        for layer in range(c.layers):
            for part in ("re", "im"):
                specs.append(ParamSpec(f"block{layer}.spec_{part}", (c.modes, c.width, c.width),
                                       "spectral", c.width, c.width))
            specs += dense_specs(f"block{layer}.bypass", [c.width, c.width])
        specs += dense_specs("proj", [c.width, *c.projection_widths, 2])
        return specs

    def block(self, tensors, layer: int, h: Tensor) -> Tensor:
        act = ACTIVATIONS[self.config.activation]
        spectral = spectral_conv(h, tensors[f"block{layer}.spec_re"], tensors[f"block{layer}.spec_im"])
        bypass = h @ tensors[f"block{layer}.bypass.0.w"] + tensors[f"block{layer}.bypass.0.b"]
        return act(spectral + bypass)

    def forward(self, tensors, inputs, input_dt, query_times, **kw) -> Tensor:
        c = self.config
        q = check_queries(query_times, c.t_out, c.t_end)
        if q.size < 2:
            raise ValueError("FNO needs at least 2 query points")
        x = fno_input(self.scale_inputs(inputs, input_dt), input_dt, q, c.t_out, c.t_end)
        h = mlp(tensors, "lift", Tensor(x), 1, c.activation)
        for layer in range(c.layers):
            h = self.block(tensors, layer, h)
        return mlp(tensors, "proj", h, len(c.projection_widths) + 1, c.activation)

    def predict(self, inputs, input_dt, query_times, batch_size: int | None = None):
        if batch_size is None:
            # keep the (B, n, width) activations to a few tens of MB on fine grids
            batch_size = max(1, min(64, 400_000 // (len(query_times) * self.config.width) or 1))
        return super().predict(inputs, input_dt, query_times, batch_size)
