import dataclasses

import numpy as np
import pytest

from psno.datagen import SamplingConfig, build_dataset, generate_split


def rk4_oracle(params_list, t_end=3.1, h=1e-5):
    """Classic fixed-step RK4 on many SMIB systems at once; returns (t, delta, omega)."""
    k = np.array([np.pi * p.f0 / p.H for p in params_list])
    pmax = np.array([p.pmax for p in params_list])
    pm1 = np.array([p.Pm1 for p in params_list])
    damp = np.array([p.D for p in params_list])
    d = np.array([p.delta0 for p in params_list])
    w = np.zeros_like(d)

    def f(d, w):
        return w, k * (pm1 - damp * w - pmax * np.sin(d))

    n = round(t_end / h)
    deltas = np.empty((n + 1, d.size))
    omegas = np.empty((n + 1, d.size))
    deltas[0], omegas[0] = d, w
    for i in range(n):
        a = f(d, w)
        b = f(d + h / 2 * a[0], w + h / 2 * a[1])
        c = f(d + h / 2 * b[0], w + h / 2 * b[1])
        e = f(d + h * c[0], w + h * c[1])
        d = d + h / 6 * (a[0] + 2 * b[0] + 2 * c[0] + e[0])
        w = w + h / 6 * (a[1] + 2 * b[1] + 2 * c[1] + e[1])
        deltas[i + 1], omegas[i + 1] = d, w
    return h * np.arange(n + 1), deltas, omegas


@pytest.fixture(scope="session")
def small_config():
    return SamplingConfig(n_train=60, n_val=20, n_test=10, unstable_fraction=0.2, seed=11)


@pytest.fixture(scope="session")
def small_splits(small_config):
    return build_dataset(small_config)


@pytest.fixture(scope="session")
def small_fine_test(small_config, small_splits):
    fine = generate_split(dataclasses.replace(small_config, dt=5e-5), "test")
    fine.stats = small_splits.train.stats
    return fine


@pytest.fixture(scope="session")
def smoke_splits():
    """200 coarse training records with a 20% unstable mix."""
    return build_dataset(SamplingConfig(n_train=200, n_val=40, n_test=20,
                                        unstable_fraction=0.2, seed=5))
