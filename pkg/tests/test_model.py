import numpy as np
import pytest

from ekfadmm.core_models import ModelSpec
from ekfadmm.model import (
    ModelDimensionError,
    ModelKindError,
    Sample,
    batch_loss_grad,
    layer_shapes,
    linearize,
    load_params_csv,
    mlp_init,
    model_eval,
    model_eval_batch,
    model_jacobian,
    pack_params,
    param_count,
    save_params_csv,
    unpack_params,
)


def test_default_mlp_has_105_parameters(mlp_spec):
    assert layer_shapes(mlp_spec) == [(8, 2), (8, 8), (1, 8)]
    assert param_count(mlp_spec) == 105


def test_linear_param_count(linear_spec):
    assert param_count(linear_spec) == 3


def test_linear_spec_requires_size():
    with pytest.raises(ValueError):
        ModelSpec(kind="linear_tv")


def test_unpack_then_pack_is_identity(mlp_spec, rng):
    x = rng.standard_normal(105)
    layers = unpack_params(mlp_spec, x)
    assert [W.shape for W, _ in layers] == [(8, 2), (8, 8), (1, 8)]
    np.testing.assert_array_equal(pack_params(layers), x)


def test_unpack_rejects_wrong_length(mlp_spec):
    with pytest.raises(ModelDimensionError):
        unpack_params(mlp_spec, np.zeros(104))


def test_mlp_init_is_seeded_xavier(mlp_spec):
    a = mlp_init(mlp_spec, 7)
    b = mlp_init(mlp_spec, 7)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, mlp_init(mlp_spec, 8))
    for (W, bias), (n_out, n_in) in zip(unpack_params(mlp_spec, a), layer_shapes(mlp_spec)):
        assert np.all(bias == 0.0)
        assert np.all(np.abs(W) <= np.sqrt(6.0 / (n_in + n_out)))


def test_mlp_init_rejects_linear(linear_spec):
    with pytest.raises(ModelKindError):
        mlp_init(linear_spec, 0)


def test_linear_eval_and_jacobian(linear_spec, rng):
    C = rng.standard_normal((2, 3))
    x = rng.standard_normal(3)
    sample = Sample(k=0, y=np.zeros(2), C=C)
    np.testing.assert_allclose(model_eval(linear_spec, x, sample), C @ x)
    np.testing.assert_array_equal(model_jacobian(linear_spec, x, sample), C)


def test_linear_sample_without_C_is_rejected(linear_spec):
    with pytest.raises(ModelDimensionError):
        model_eval(linear_spec, np.zeros(3), Sample(k=0, y=np.zeros(2), z=np.zeros(2)))


def test_mlp_sample_without_z_is_rejected(mlp_spec):
    with pytest.raises(ModelDimensionError):
        model_eval(mlp_spec, np.zeros(105), Sample(k=0, y=np.zeros(1)))


def test_non_finite_params_are_rejected(mlp_spec):
    x = np.zeros(105)
    x[3] = np.nan
    with pytest.raises(ModelDimensionError):
        model_eval(mlp_spec, x, Sample(k=0, y=np.zeros(1), z=np.zeros(2)))


def test_mlp_jacobian_matches_finite_differences(mlp_spec, rng):
    x = mlp_init(mlp_spec, rng) + 0.1 * rng.standard_normal(105)
    sample = Sample(k=0, y=np.zeros(1), z=np.array([0.3, -0.7]))
    J = model_jacobian(mlp_spec, x, sample)
    assert J.shape == (1, 105)
    h = 1e-6
    J_fd = np.empty_like(J)
    for j in range(105):
        e = np.zeros(105)
        e[j] = h
        J_fd[:, j] = (model_eval(mlp_spec, x + e, sample) - model_eval(mlp_spec, x - e, sample)) / (2 * h)
    assert np.linalg.norm(J - J_fd) / np.linalg.norm(J) < 1e-5


def test_linearized_measurement_reproduces_output_at_xbar(mlp_spec, rng):
    xbar = mlp_init(mlp_spec, rng)
    sample = Sample(k=0, y=np.array([0.25]), z=np.array([0.1, 0.9]))
    C, y_lin = linearize(mlp_spec, xbar, sample)
    np.testing.assert_allclose(y_lin - C @ xbar, sample.y - model_eval(mlp_spec, xbar, sample), atol=1e-14)


def test_batch_eval_matches_single_samples(mlp_spec, rng):
    x = mlp_init(mlp_spec, rng)
    Z = rng.uniform(-1, 1, (6, 2))
    batch = model_eval_batch(mlp_spec, x, Z)
    single = np.vstack([model_eval(mlp_spec, x, Sample(k=k, y=np.zeros(1), z=Z[k])) for k in range(6)])
    np.testing.assert_allclose(batch, single, atol=1e-14)


def test_batch_gradient_matches_finite_differences(mlp_spec, rng):
    x = mlp_init(mlp_spec, rng) + 0.1 * rng.standard_normal(105)
    Z = rng.uniform(-1, 1, (5, 2))
    Y = rng.standard_normal((5, 1))
    _, grad = batch_loss_grad(mlp_spec, x, Z, Y)
    h = 1e-6
    fd = np.empty(105)
    for j in range(105):
        e = np.zeros(105)
        e[j] = h
        fd[j] = (batch_loss_grad(mlp_spec, x + e, Z, Y)[0] - batch_loss_grad(mlp_spec, x - e, Z, Y)[0]) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_linear_batch_loss(linear_spec, rng):
    C = rng.standard_normal((4, 2, 3))
    x = rng.standard_normal(3)
    Y = rng.standard_normal((4, 2))
    loss, grad = batch_loss_grad(linear_spec, x, C, Y, weight=2.0)
    resid = np.einsum("kij,j->ki", C, x) - Y
    assert loss == pytest.approx(np.sum(resid ** 2))
    np.testing.assert_allclose(grad, 2.0 * sum(C[k].T @ resid[k] for k in range(4)))


def test_params_csv_round_trip(tmp_path, rng):
    a, b = rng.standard_normal(105), rng.standard_normal(105)
    save_params_csv(tmp_path / "params.csv", a, b)
    rows = load_params_csv(tmp_path / "params.csv")
    assert len(rows) == 2
    np.testing.assert_array_equal(rows[0], a)
    np.testing.assert_array_equal(rows[1], b)
