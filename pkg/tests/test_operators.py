import dataclasses
import math

import numpy as np
import pytest

from psno.numcore import ParamSet, Tensor, value_and_grad
from psno.operators import (FNO, KINDS, DeepONetConfig, FNOConfig, InputScaling, LNODEConfig,
                            SensorWhitening, build_model, count_params, fit_input_scaling,
                            fit_sensor_whitening, fno_input, load_model, sensor_values,
                            within_budget)
from psno.smib import uniform_grid
from psno.training import h1_loss

import gradcheck

COARSE = uniform_grid(0.3, 3.1, 0.1)
FINE = uniform_grid(0.3, 3.1, 5e-5)

TINY = {
    "deeponet": dict(branch_widths=(6,), trunk_widths=(5,), basis=4),
    "fno": dict(width=4, layers=2, modes=5, projection_widths=(6,)),
    "lnode-fixed": dict(encoder_widths=(6,), latent_dim=3, dynamics_widths=(5,),
                        decoder_widths=(4,), steps_per_unit=20),
    "lnode-adaptive": dict(encoder_widths=(6,), latent_dim=3, dynamics_widths=(5,),
                           decoder_widths=(4,)),
}


def inputs(batch, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 1.0, size=(batch, 3, 2))


def zeros_like(model):
    return ParamSet({name: np.zeros_like(a) for name, a in model.params.items()})


def set_params(model, **values):
    params = model.params.copy()
    for name, v in values.items():
        params[name.replace("__", ".")] = np.broadcast_to(v, params[name.replace("__", ".")].shape)
    return model.with_params(params)


# -- interface -----------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_zero_parameters_give_zero_output(kind):
    model = build_model(kind, TINY[kind])
    model = model.with_params(zeros_like(model))
    out = model.predict(inputs(3), 0.1, COARSE)
    assert out.shape == (3, 29, 2)
    assert np.all(out == 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_query_window_enforced(kind):
    model = build_model(kind, TINY[kind])
    with pytest.raises(ValueError):
        model.predict(inputs(1), 0.1, np.array([0.25, 0.3]))
    with pytest.raises(ValueError):
        model.predict(inputs(1), 0.1, np.array([3.0, 3.2]))


@pytest.mark.parametrize("kind", KINDS)
def test_prediction_deterministic(kind):
    model = build_model(kind, TINY[kind], seed=3)
    a = model.predict(inputs(4), 0.1, COARSE)
    b = build_model(kind, TINY[kind], seed=3).predict(inputs(4), 0.1, COARSE)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("kind", KINDS)
def test_checkpoint_reload(kind, tmp_path):
    model = build_model(kind, TINY[kind], seed=4)
    model.save(tmp_path / "m.ck", epoch=1)
    back, header = load_model(tmp_path / "m.ck")
    assert header["kind"] == kind and back.kind_name == kind
    assert back.config == model.config
    assert back.predict(inputs(2), 0.1, COARSE).tobytes() == model.predict(inputs(2), 0.1, COARSE).tobytes()


def test_unknown_config_key():
    with pytest.raises(ValueError):
        build_model("fno", {"width": 4, "depth": 3})
    with pytest.raises(ValueError):
        build_model("transformer")


def test_sensor_interpolation_at_fine_resolution():
    fine_in = np.stack([np.linspace(0, 0.2, 4001) ** 2, np.linspace(0, 0.2, 4001)], axis=-1)[None]
    got = sensor_values(fine_in, 5e-5, (0.0, 0.1, 0.2))
    np.testing.assert_allclose(got[0], [0, 0.01, 0.04, 0, 0.1, 0.2], atol=1e-12)


# -- input preprocessing -------------------------------------------------------------

def correlated_windows(n, seed=0):
    """Windows like the data: nearly collinear angles, speed 0 at t=0."""
    rng = np.random.default_rng(seed)
    d0 = rng.uniform(0.2, 0.5, n)
    acc = rng.normal(0.0, 0.02, n)
    delta = d0[:, None] + acc[:, None] * np.array([0.0, 1.0, 4.0]) + rng.normal(0, 1e-3, (n, 3))
    omega = acc[:, None] * np.array([0.0, 2.0, 4.0]) + rng.normal(0, 1e-3, (n, 3)) * [0, 1, 1]
    return np.stack([delta, omega], axis=-1)


def test_whitening_gives_unit_covariance():
    raw = sensor_values(correlated_windows(500), 0.1, (0.0, 0.1, 0.2))
    w = fit_sensor_whitening(raw)
    out = w.apply(raw)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    cov = np.cov(out, rowvar=False)
    # the speed at t=0 never varies, so that direction is dropped
    np.testing.assert_allclose(out[:, 3], 0.0, atol=1e-12)
    keep = [0, 1, 2, 4, 5]
    np.testing.assert_allclose(cov[np.ix_(keep, keep)], np.eye(5), atol=1e-8)


def test_whitening_identity_default_and_shape_errors():
    v = np.arange(12.0).reshape(2, 6)
    assert SensorWhitening().apply(v) is not None
    np.testing.assert_array_equal(SensorWhitening().apply(v), v)
    w = fit_sensor_whitening(np.random.default_rng(0).normal(size=(50, 6)))
    with pytest.raises(ValueError):
        w.apply(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        SensorWhitening((0.0, 0.0), ((1.0,),))


def test_input_scaling_standardizes_each_time_and_channel():
    x = correlated_windows(400, seed=1)
    out = fit_input_scaling(x, 0.1).apply(x, 0.1)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    std = out.std(axis=0)
    np.testing.assert_allclose(std[:, 0], 1.0, rtol=1e-12)
    np.testing.assert_allclose(std[1:, 1], 1.0, rtol=1e-12)
    assert np.all(out[:, 0, 1] == 0.0)


def test_input_scaling_interpolates_onto_finer_windows():
    x = correlated_windows(50, seed=2)
    scaling = fit_input_scaling(x, 0.1)
    t = np.linspace(0.0, 0.2, 4001)
    fine = np.stack([np.stack([np.interp(t, [0, 0.1, 0.2], w[:, c]) for c in range(2)], -1) for w in x])
    np.testing.assert_allclose(scaling.apply(fine, 5e-5)[:, ::2000], scaling.apply(x, 0.1), atol=1e-12)
    with pytest.raises(ValueError):
        InputScaling((0.0, 0.1), ((0.0, 0.0),), ((1.0, 1.0),))
    with pytest.raises(ValueError):
        InputScaling((0.0,), ((0.0, 0.0),), ((1.0, 0.0),))


@pytest.mark.parametrize("kind", KINDS)
def test_fitted_preprocessing_survives_checkpoint(kind, tmp_path):
    x = correlated_windows(64, seed=3)
    model = build_model(kind, TINY[kind], seed=4).fitted(x, 0.1)
    if kind == "fno":
        assert model.input_scaling.times and not model.sensor_whitening.mean
    else:
        assert model.sensor_whitening.mean and not model.input_scaling.times
    model.save(tmp_path / "m.ck")
    back, header = load_model(tmp_path / "m.ck")
    assert back.input_scaling == model.input_scaling
    assert back.sensor_whitening == model.sensor_whitening
    assert back.predict(x[:4], 0.1, COARSE).tobytes() == model.predict(x[:4], 0.1, COARSE).tobytes()
    # preprocessing is part of the model: predictions differ from the unfitted one
    plain = build_model(kind, TINY[kind], seed=4)
    assert not np.array_equal(plain.predict(x[:4], 0.1, COARSE), model.predict(x[:4], 0.1, COARSE))


def test_fitted_deeponet_keeps_bitwise_query_invariance():
    x = correlated_windows(8, seed=5)
    model = build_model("deeponet", seed=2).fitted(correlated_windows(100), 0.1)
    assert np.array_equal(model.predict(x, 0.1, FINE)[:, ::2000], model.predict(x, 0.1, COARSE))


# -- gradient checks ---------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_gradients(kind):
    model = build_model(kind, TINY[kind], seed=1)
    x = inputs(2, seed=5)
    rng = np.random.default_rng(6)
    target = rng.uniform(-1, 1, size=(2, 29, 2))
    steps = None
    if kind == "lnode-adaptive":
        record = {}
        model.forward(model.tensors(), x, 0.1, COARSE, record=record)
        steps = record["steps"]

    def fn(t):
        return h1_loss(model.forward(t, x, 0.1, COARSE, steps=steps), target, 0.1)

    assert gradcheck.check(fn, model.params, coords=60) < 1e-5


# -- DeepONet ---------------------------------------------------------------------

def test_deeponet_constructed_inner_product():
    config = DeepONetConfig(branch_widths=(), trunk_widths=(), basis=1, activation="identity")
    model = build_model("deeponet", config)
    model = set_params(model.with_params(zeros_like(model)), **{
        "branch.0.b": 1.0, "trunk.0.w": 1.0})
    out = model.predict(inputs(2), 0.1, COARSE)
    s = (COARSE - 0.3) / 2.8
    np.testing.assert_allclose(out[0, :, 0], s, atol=1e-15)
    np.testing.assert_allclose(out[1, :, 1], s, atol=1e-15)


def test_deeponet_coarse_is_subsequence_of_fine():
    model = build_model("deeponet", seed=2)
    x = inputs(5, seed=2)
    coarse = model.predict(x, 0.1, COARSE)
    fine = model.predict(x, 0.1, FINE)
    assert np.array_equal(fine[:, ::2000], coarse)


# -- FNO ---------------------------------------------------------------------------

def _identity_block_model(n, modes):
    config = FNOConfig(width=2, layers=1, modes=modes, activation="identity")
    model = FNO(config)
    p = zeros_like(model)
    p["block0.spec_re"] = np.broadcast_to(np.eye(2), (modes, 2, 2)).copy()
    return model.with_params(p)


@pytest.mark.parametrize("n", [8, 29, 101])
def test_fno_block_identity_with_full_modes(n):
    model = _identity_block_model(n, n // 2 + 1)
    h = np.random.default_rng(n).normal(size=(3, n, 2))
    out = model.block(model.tensors(), 0, Tensor(h)).value
    assert np.max(np.abs(out - h)) < 1e-12


@pytest.mark.parametrize("n", [8, 29, 101])
def test_fno_block_truncation_oracle(n):
    from test_numcore import truncation_oracle
    m = 3
    model = _identity_block_model(n, m)
    h = np.random.default_rng(n).normal(size=(1, n, 2))
    out = model.block(model.tensors(), 0, Tensor(h)).value
    for ch in range(2):
        assert np.max(np.abs(out[0, :, ch] - truncation_oracle(h[0, :, ch], m))) < 1e-10


def test_fno_invariant_to_high_modes():
    n, m = 64, 6
    model = _identity_block_model(n, m)
    model.params["block0.spec_im"] = np.random.default_rng(0).normal(size=(m, 2, 2))
    model.params["block0.spec_re"] = np.random.default_rng(1).normal(size=(m, 2, 2))
    h = np.random.default_rng(2).normal(size=(2, n, 2))
    j = np.arange(n)
    high = sum(np.cos(2 * np.pi * k * j / n + k) for k in range(m, n // 2 + 1))
    a = model.block(model.tensors(), 0, Tensor(h)).value
    b = model.block(model.tensors(), 0, Tensor(h + 3.0 * high[None, :, None])).value
    assert np.max(np.abs(a - b)) < 1e-12


def test_fno_input_construction():
    x = inputs(2)
    sig = fno_input(x, 0.1, COARSE)
    assert sig.shape == (2, 29, 3)
    np.testing.assert_allclose(sig[:, 0, :2], x[:, 0])
    np.testing.assert_allclose(sig[:, -1, :2], x[:, -1])
    np.testing.assert_allclose(sig[0, :, 2], (COARSE - 0.3) / 2.8)


def test_fno_fine_grid_runs():
    model = build_model("fno", TINY["fno"])
    out = model.predict(inputs(2), 0.1, FINE)
    assert out.shape == (2, 56001, 2) and np.all(np.isfinite(out))


def test_fno_needs_two_points():
    model = build_model("fno", TINY["fno"])
    with pytest.raises(ValueError):
        model.predict(inputs(1), 0.1, np.array([0.3]))


# -- LNODE -------------------------------------------------------------------------

def _exponential_model(solver, lam=-0.5, z0=1.3):
    config = LNODEConfig(encoder_widths=(), latent_dim=1, dynamics_widths=(), decoder_widths=(),
                         activation="identity", solver=solver)
    model = build_model(f"lnode-{solver}", config)
    p = zeros_like(model)
    p["encoder.0.b"] = np.array([z0])
    p["dynamics.0.w"] = np.array([[lam], [0.0]])
    p["decoder.0.w"] = np.array([[1.0, 1.0]])
    return model.with_params(p)


@pytest.mark.parametrize("solver", ["fixed", "adaptive"])
def test_lnode_exponential_oracle(solver):
    model = _exponential_model(solver)
    out = model.predict(inputs(2), 0.1, COARSE)
    exact = 1.3 * np.exp(-0.5 * (COARSE - 0.2))
    for ch in range(2):
        assert np.max(np.abs(out[0, :, ch] / exact - 1.0)) < 1e-6


@pytest.mark.parametrize("solver", ["fixed", "adaptive"])
def test_lnode_zero_dynamics_constant(solver):
    model = build_model(f"lnode-{solver}", TINY[f"lnode-{solver}"], seed=2)
    p = model.params.copy()
    for name in p.names():
        if name.startswith("dynamics"):
            p[name] = np.zeros_like(p[name])
    model = model.with_params(p)
    out = model.predict(inputs(3), 0.1, COARSE)
    assert np.max(np.abs(out - out[:, :1])) < 1e-15


def test_lnode_adaptive_discretization_consistency():
    model = build_model("lnode-adaptive", seed=5)
    x = inputs(3, seed=4)
    coarse = model.predict(x, 0.1, COARSE)
    fine = model.predict(x, 0.1, FINE)
    assert np.max(np.abs(fine[:, ::2000] - coarse)) < 1e-6


def test_lnode_fixed_discretization_consistency():
    model = build_model("lnode-fixed", seed=5)
    x = inputs(3, seed=4)
    # same latent path; only the decoder's matrix shapes differ, so round-off
    diff = model.predict(x, 0.1, FINE)[:, ::2000] - model.predict(x, 0.1, COARSE)
    assert np.max(np.abs(diff)) < 1e-13


def test_lnode_solver_validation():
    with pytest.raises(ValueError):
        LNODEConfig(solver="euler")


# -- parameter counts ------------------------------------------------------------

def dense_count(widths):
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def test_deeponet_reference_count():
    expected = dense_count([6, 512, 512, 256]) + dense_count([1, 512, 512, 128]) + 2
    assert count_params("deeponet") == expected == 726_914
    assert within_budget(expected)


def test_fno_reference_count():
    w, m, L = 80, 14, 4
    expected = dense_count([3, w]) + L * (2 * m * w * w + w * w + w) + dense_count([w, 128, 2])
    assert count_params("fno") == expected == 753_666
    assert within_budget(expected)


def test_lnode_reference_count():
    expected = (dense_count([6, 512, 512, 512, 64]) + dense_count([65, 128, 128, 64])
                + dense_count([64, 256, 256, 2]))
    for kind in ("lnode-fixed", "lnode-adaptive"):
        assert count_params(kind) == expected == 677_890
    assert within_budget(expected)


def test_fno_zero_layers_count():
    assert count_params("fno", dict(layers=0)) == dense_count([3, 80]) + dense_count([80, 128, 2])


@pytest.mark.parametrize("kind", KINDS)
def test_count_matches_instantiated(kind):
    assert build_model(kind, TINY[kind]).params.count() == count_params(kind, TINY[kind])
