"""Latent neural ODE: encode sensors, evolve a latent state in time, decode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Tensor, concat
from ..numcore.ode import adams_bashforth4, dopri5, interp_linear
from .base import TAU, T_END, T_OUT, SensorModel, check_queries, dense_specs, mlp, scaled_time

SOLVERS = ("fixed", "adaptive")


@dataclass(frozen=True)
class LNODEConfig:
    sensor_times: tuple = (0.0, 0.1, 0.2)
    encoder_widths: tuple = (512, 512, 512)
    latent_dim: int = 64
    dynamics_widths: tuple = (128, 128)
    decoder_widths: tuple = (256, 256)
    activation: str = "tanh"
    solver: str = "fixed"
    steps_per_unit: int = 100
    rtol: float = 1e-6
    atol: float = 1e-8
    first_step: float = 0.01
    tau: float = TAU
    t_out: float = T_OUT
    t_end: float = T_END

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")


class LNODE(SensorModel):
    kind = "lnode"
    config_class = LNODEConfig

    @property
    def kind_name(self) -> str:
        return f"lnode-{self.config.solver}"

    def _widths(self):
        c = self.config
        return ([2 * len(c.sensor_times), *c.encoder_widths, c.latent_dim],
                [c.latent_dim + 1, *c.dynamics_widths, c.latent_dim],
                [c.latent_dim, *c.decoder_widths, 2])

    def param_specs(self):
        enc, dyn, dec = self._widths()
        return dense_specs("encoder", enc) + dense_specs("dynamics", dyn) + dense_specs("decoder", dec)

    def encode(self, tensors, sensors: np.ndarray) -> Tensor:
        return mlp(tensors, "encoder", Tensor(sensors), len(self._widths()[0]) - 1,
                   self.config.activation)

    def dynamics(self, tensors):
        c = self.config
        n_layers = len(self._widths()[1]) - 1

        def f(t, z):
            s = np.full((z.shape[0], 1), float(scaled_time(t, c.t_out, c.t_end)))
            return mlp(tensors, "dynamics", concat([z, Tensor(s)], axis=1), n_layers, c.activation)

        return f

    def decode(self, tensors, z: Tensor) -> Tensor:
        return mlp(tensors, "decoder", z, len(self._widths()[2]) - 1, self.config.activation)

    def latent_path(self, tensors, z0: Tensor, query, steps=None, record=None) -> Tensor:
        """Latent states (B, q, d) at the query times, integrated from tau to t_end."""
        c = self.config
        f = self.dynamics(tensors)
        if c.solver == "fixed":
            times, states = adams_bashforth4(f, z0, c.tau, c.t_end, 1.0 / c.steps_per_unit)
            return interp_linear(times, states, query)
        sol = dopri5(f, z0, c.tau, c.t_end, rtol=c.rtol, atol=c.atol,
                     first_step=c.first_step, steps=steps)
        if record is not None:
            record["steps"] = sol.steps
        return sol(query)

    def forward(self, tensors, inputs, input_dt, query_times, steps=None, record=None) -> Tensor:
        c = self.config
        q = check_queries(query_times, c.t_out, c.t_end)
        if np.any(np.diff(q) <= 0):
            raise ValueError("query times must be increasing")
        z0 = self.encode(tensors, self.sensor_features(inputs, input_dt))
        return self.decode(tensors, self.latent_path(tensors, z0, q, steps, record))

    def predict(self, inputs, input_dt, query_times, batch_size: int | None = None):
        if batch_size is None:
            batch_size = max(1, min(64, 2_000_000 // (len(query_times) * 256)))
        return super().predict(inputs, input_dt, query_times, batch_size)
