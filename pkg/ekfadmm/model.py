# File: ekfadmm/model.py
"""
Parametric measurement models h(k, z; x) and their Jacobians.

Two families are supported:
- `linear_tv`: h_k(x) = C_k x with C_k supplied per sample.
- `mlp`: tanh hidden layers followed by a linear output layer.

MLP parameter layout is fixed so saved vectors are portable: for each layer,
input to output, the weight matrix W (shape out x in, row-major) followed by
its bias b.
"""
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ekfadmm.core_models import ModelSpec


class ModelDimensionError(ValueError):
    """Raised when parameters, inputs or outputs have inconsistent shapes."""
    pass


class ModelKindError(ValueError):
    """Raised when an operation is requested for the wrong model family."""
    pass


@dataclass(frozen=True)
class Sample:
    """One data point. `C` replaces `z` for linear time-varying models."""
    k: int
    y: np.ndarray
    z: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None


Layer = Tuple[np.ndarray, np.ndarray]


# --- Layout ---

def layer_shapes(spec: ModelSpec) -> List[Tuple[int, int]]:
    """(out, in) for every layer of an mlp spec."""
    if spec.kind != "mlp":
        raise ModelKindError(f"layer_shapes needs an mlp spec, got '{spec.kind}'")
    widths = [spec.n_in, *spec.hidden, spec.n_out]
    return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]


def param_count(spec: ModelSpec) -> int:
    if spec.kind == "linear_tv":
        return int(spec.n_params)
    return sum(n_out * n_in + n_out for n_out, n_in in layer_shapes(spec))


def unpack_params(spec: ModelSpec, x: np.ndarray) -> List[Layer]:
    """Views into x, one (W, b) pair per layer."""
    x = np.asarray(x, dtype=float)
    if x.shape != (param_count(spec),):
        raise ModelDimensionError(f"expected {param_count(spec)} parameters, got shape {x.shape}")
    layers: List[Layer] = []
    offset = 0
    for n_out, n_in in layer_shapes(spec):
        W = x[offset:offset + n_out * n_in].reshape(n_out, n_in)
        offset += n_out * n_in
        b = x[offset:offset + n_out]
        offset += n_out
        layers.append((W, b))
    return layers


def pack_params(layers: List[Layer]) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def mlp_init(spec: ModelSpec, seed: int | np.random.Generator) -> np.ndarray:
    """
    Xavier-uniform weights, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), zero biases.
    Deterministic given the seed (or generator state).
    """
    if spec.kind != "mlp":
        raise ModelKindError(f"mlp_init needs an mlp spec, got '{spec.kind}'")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for n_out, n_in in layer_shapes(spec):
        a = np.sqrt(6.0 / (n_in + n_out))
        layers.append((rng.uniform(-a, a, size=(n_out, n_in)), np.zeros(n_out)))
    return pack_params(layers)


# --- Single-sample evaluation ---

def _check_finite(name: str, v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise ModelDimensionError(f"{name} contains non-finite values")


def _forward(layers: List[Layer], z: np.ndarray) -> List[np.ndarray]:
    """Activations a_0 = z, a_1, ..., a_L (the last one is the linear output)."""
    acts = [z]
    for i, (W, b) in enumerate(layers):
        pre = W @ acts[-1] + b
        acts.append(pre if i == len(layers) - 1 else np.tanh(pre))
    return acts


def _linear_C(spec: ModelSpec, sample: Sample) -> np.ndarray:
    if sample.C is None:
        raise ModelDimensionError("linear_tv sample is missing C_k")
    C = np.asarray(sample.C, dtype=float)
    if C.ndim != 2 or C.shape[1] != spec.n_params:
        raise ModelDimensionError(f"C_k must have {spec.n_params} columns, got shape {C.shape}")
    return C


def _mlp_input(spec: ModelSpec, sample: Sample) -> np.ndarray:
    if sample.z is None:
        raise ModelDimensionError("mlp sample is missing z")
    z = np.asarray(sample.z, dtype=float)
    if z.shape != (spec.n_in,):
        raise ModelDimensionError(f"z must have shape ({spec.n_in},), got {z.shape}")
    _check_finite("z", z)
    return z


def model_eval(spec: ModelSpec, params: np.ndarray, sample: Sample) -> np.ndarray:
    """h_k(x): C_k x for linear_tv, the tanh forward pass for mlp."""
    params = np.asarray(params, dtype=float)
    _check_finite("params", params)
    if spec.kind == "linear_tv":
        C = _linear_C(spec, sample)
        if params.shape != (C.shape[1],):
            raise ModelDimensionError(f"params must have shape ({C.shape[1]},), got {params.shape}")
        return C @ params
    return _forward(unpack_params(spec, params), _mlp_input(spec, sample))[-1]


def model_jacobian(spec: ModelSpec, params: np.ndarray, sample: Sample) -> np.ndarray:
    """
    Exact Jacobian dh/dx (n_y x n_x).

    For the mlp this is reverse accumulation: delta_L = I at the linear output,
    delta_l = (delta_{l+1} W_{l+1}) * (1 - a_l^2) below it, and the block for
    (W_l, b_l) is (delta_l outer a_{l-1}, delta_l).
    """
    params = np.asarray(params, dtype=float)
    if spec.kind == "linear_tv":
        C = _linear_C(spec, sample)
        if params.shape != (C.shape[1],):
            raise ModelDimensionError(f"params must have shape ({C.shape[1]},), got {params.shape}")
        return C.copy()

    layers = unpack_params(spec, params)
    acts = _forward(layers, _mlp_input(spec, sample))
    blocks: List[np.ndarray] = []
    delta = np.eye(spec.n_out)
    for i in range(len(layers) - 1, -1, -1):
        a_in = acts[i]
        dW = (delta[:, :, None] * a_in[None, None, :]).reshape(spec.n_out, -1)
        blocks.append(np.hstack([dW, delta]))
        if i > 0:
            W = layers[i][0]
            delta = (delta @ W) * (1.0 - acts[i] ** 2)
    return np.hstack(blocks[::-1])


def linearized_target(y_nl: np.ndarray, h_at_xbar: np.ndarray, C: np.ndarray, xbar: np.ndarray) -> np.ndarray:
    """y_k = y_nl - h_k(xbar) + C_k xbar, the measurement of the LTV surrogate model."""
    y_nl = np.atleast_1d(np.asarray(y_nl, dtype=float))
    h_at_xbar = np.atleast_1d(np.asarray(h_at_xbar, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    if y_nl.shape != h_at_xbar.shape or C.shape != (y_nl.shape[0], xbar.shape[0]):
        raise ModelDimensionError(
            f"inconsistent shapes: y {y_nl.shape}, h {h_at_xbar.shape}, C {C.shape}, xbar {xbar.shape}"
        )
    return y_nl - h_at_xbar + C @ xbar


def linearize(spec: ModelSpec, xbar: np.ndarray, sample: Sample) -> Tuple[np.ndarray, np.ndarray]:
    """Jacobian C_k at xbar and the matching linearized measurement y_k."""
    C = model_jacobian(spec, xbar, sample)
    if spec.kind == "linear_tv":
        return C, np.asarray(sample.y, dtype=float)
    return C, linearized_target(sample.y, model_eval(spec, xbar, sample), C, xbar)


# --- Whole-dataset evaluation ---

def model_eval_batch(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """
    Outputs for every sample at once. `inputs` is the (N, n_y, n_x) stack of
    C_k for linear_tv, the (N, n_z) regressor matrix for mlp.
    """
    params = np.asarray(params, dtype=float)
    if spec.kind == "linear_tv":
        return np.einsum("kij,j->ki", inputs, params)
    acts = inputs
    layers = unpack_params(spec, params)
    for i, (W, b) in enumerate(layers):
        pre = acts @ W.T + b
        acts = pre if i == len(layers) - 1 else np.tanh(pre)
    return acts


def batch_loss_grad(
    spec: ModelSpec, params: np.ndarray, inputs: np.ndarray, Y: np.ndarray, weight: float = 1.0
) -> Tuple[float, np.ndarray]:
    """
    F(x) = sum_k (weight/2) ||y_k - h_k(x)||^2 and its gradient, by one batched
    backward pass.
    """
    params = np.asarray(params, dtype=float)
    if spec.kind == "linear_tv":
        resid = np.einsum("kij,j->ki", inputs, params) - Y
        return 0.5 * weight * float(np.sum(resid ** 2)), weight * np.einsum("kij,ki->j", inputs, resid)

    layers = unpack_params(spec, params)
    acts = [inputs]
    for i, (W, b) in enumerate(layers):
        pre = acts[-1] @ W.T + b
        acts.append(pre if i == len(layers) - 1 else np.tanh(pre))
    err = weight * (acts[-1] - Y)
    loss = 0.5 * float(np.sum(err * (acts[-1] - Y)))

    grads: List[Layer] = []
    delta = err
    for i in range(len(layers) - 1, -1, -1):
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ layers[i][0]) * (1.0 - acts[i] ** 2)
    return loss, pack_params(grads[::-1])


# --- Persistence ---

def save_params_csv(path: Path, *rows: np.ndarray) -> None:
    """One parameter vector per row, one value per column, layout as documented above."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in rows:
            writer.writerow([repr(float(v)) for v in np.asarray(row, dtype=float)])


def load_params_csv(path: Path) -> List[np.ndarray]:
    with open(path, newline="") as f:
        return [np.array([float(v) for v in row]) for row in csv.reader(f) if row]
