"""
Finite-difference check of the gradient of the training loss with respect to the
network weights. Meant for tiny configs built in float64, see :func:`floatx`.
"""
import contextlib
from dataclasses import dataclass

import numpy as np
import tensorflow as tf

from ..diffusion import training_loss

__all__ = ["GradientCheckResult", "floatx", "loss_gradient_check", "randomize_weights"]


@contextlib.contextmanager
def floatx(dtype: str):
    """Temporarily sets the Keras default float type, e.g., to build float64 models."""
    previous = tf.keras.backend.floatx()
    tf.keras.backend.set_floatx(dtype)
    try:
        yield
    finally:
        tf.keras.backend.set_floatx(previous)


def randomize_weights(model: tf.keras.Model, scale: float = 0.2, seed: int = 0):
    """
    Overwrites every weight with uniform noise in ``[-scale, scale]``. Normalization
    scales are drawn around 1. The zero-initialized output layer otherwise hides most
    of the network from gradient and sensitivity checks.
    """
    rng = np.random.default_rng(seed)
    for w in model.weights:
        value = rng.uniform(-scale, scale, size=w.shape)
        if w.name.split("/")[-1].startswith("gamma"):
            value += 1.0
        w.assign(value.astype(w.dtype.as_numpy_dtype))


@dataclass
class GradientCheckResult:
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray
    checked_weights: list  # (variable name, flat index)


def _loss(model, batch, loss_scale):
    inputs = {key: value for key, value in batch.items() if key != "eps"}
    eps_hat = model(inputs)
    return loss_scale * training_loss(batch["eps"], eps_hat)


def loss_gradient_check(
    model: tf.keras.Model,
    batch: dict,
    nb_weights: int = 32,
    h: float = 1e-3,
    seed: int = 0,
    loss_scale: float = 1.0,
    rel_floor: float = 1e-5,
) -> GradientCheckResult:
    """
    Compares the analytic gradient of ``loss_scale * training_loss`` with central
    finite differences on a random subset of scalar weights.

    Args:
        model: Denoising network, ideally built in float64.
        batch: Model inputs plus the target noise under the key ``"eps"``.
        nb_weights: Number of scalar weights to check.
        h: Finite-difference step.
        seed: Seed for choosing the checked weights.
        loss_scale: Multiplies the loss.
        rel_floor: Lower bound for the denominator of the relative error, so that
            gradients that vanish up to rounding do not produce spurious errors.

    Returns:
        :class:`GradientCheckResult` with the gradients of the checked weights.
    """
    variables = model.trainable_variables
    with tf.GradientTape() as tape:
        loss = _loss(model, batch, loss_scale)
    grads = tape.gradient(loss, variables)
    grads = [
        np.zeros(v.shape) if g is None else tf.convert_to_tensor(g).numpy()
        for v, g in zip(variables, grads)
    ]

    sizes = np.array([int(np.prod(v.shape)) for v in variables])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    nb_checked = min(nb_weights, int(offsets[-1]))
    flat_indices = rng.choice(offsets[-1], size=nb_checked, replace=False)

    analytic, numeric, checked = [], [], []
    for flat_idx in np.sort(flat_indices):
        var_idx = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        idx = int(flat_idx - offsets[var_idx])
        var = variables[var_idx]
        original = var.numpy()

        values = []
        for delta in (h, -h):
            perturbed = original.copy()
            perturbed.flat[idx] += delta
            var.assign(perturbed)
            values.append(float(_loss(model, batch, loss_scale)))
        var.assign(original)

        analytic.append(float(grads[var_idx].flat[idx]))
        numeric.append((values[0] - values[1]) / (2 * h))
        checked.append((var.name, idx))

    analytic, numeric = np.array(analytic), np.array(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), rel_floor)
    rel_error = np.abs(analytic - numeric) / denom
    return GradientCheckResult(
        max_rel_error=float(np.max(rel_error)) if len(rel_error) else 0.0,
        analytic=analytic,
        numeric=numeric,
        checked_weights=checked,
    )
