"""DeepONet: branch net on sensor values, trunk net on query time, inner product."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import ParamSpec, Tensor, matmul
from .base import T_END, T_OUT, SensorModel, check_queries, dense_specs, mlp, scaled_time

#: Query times are evaluated in blocks of this many rows, one matrix product
#: per block, so BLAS always sees the same shapes and a time point gets a
#: bit-identical value whatever grid it belongs to.
QUERY_BLOCK = 64


@dataclass(frozen=True)
class DeepONetConfig:
    sensor_times: tuple = (0.0, 0.1, 0.2)
    branch_widths: tuple = (512, 512)
    trunk_widths: tuple = (512, 512)
    basis: int = 128
    activation: str = "tanh"
    t_out: float = T_OUT
    t_end: float = T_END


class DeepONet(SensorModel):
    kind = "deeponet"
    config_class = DeepONetConfig

    def _branch_widths(self):
        c = self.config
        return [2 * len(c.sensor_times), *c.branch_widths, 2 * c.basis]

    def _trunk_widths(self):
        c = self.config
        return [1, *c.trunk_widths, c.basis]

    def param_specs(self):
        return (dense_specs("branch", self._branch_widths())
                + dense_specs("trunk", self._trunk_widths())
                + [ParamSpec("out.b", (2,), "bias")])

    def trunk(self, tensors, query_times) -> Tensor:
        """Basis values at the query times; leading shape follows ``query_times``."""
        c = self.config
        s = scaled_time(query_times, c.t_out, c.t_end)[..., None]
        return mlp(tensors, "trunk", Tensor(s), len(self._trunk_widths()) - 1,
                   c.activation, activate_last=True)

    def branch(self, tensors, sensors: np.ndarray) -> Tensor:
        c = self.config
        b = mlp(tensors, "branch", Tensor(sensors), len(self._branch_widths()) - 1, c.activation)
        return b.reshape(sensors.shape[0], 2, c.basis)

    def forward(self, tensors, inputs, input_dt, query_times, **kw) -> Tensor:
        c = self.config
        q = check_queries(query_times, c.t_out, c.t_end)
        coeffs = self.branch(tensors, self.sensor_features(inputs, input_dt))          # (B, 2, p)
        n, batch = q.size, coeffs.shape[0]
        blocks = np.concatenate([q, np.full(-n % QUERY_BLOCK, q[-1])]).reshape(-1, QUERY_BLOCK)
        basis = self.trunk(tensors, blocks)                                            # (k, 64, p)
        out = matmul(basis, coeffs.reshape(2 * batch, c.basis).transpose())            # (k, 64, 2B)
        out = out.reshape(-1, 2 * batch)[:n].reshape(n, batch, 2).transpose(1, 0, 2)
        return out + tensors["out.b"]
