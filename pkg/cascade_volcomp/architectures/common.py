"""
Helpers shared by the denoising networks: symmetric padding of the spatial dims to a
multiple of the total downsampling factor, and conversion between single volumes and
channels-last batches.
"""
from typing import Sequence, Tuple

import numpy as np
import tensorflow as tf

# Four levels of average pooling
DOWNSAMPLING_FACTOR = 16


def pad_amounts(dims: Sequence[int], factor: int = DOWNSAMPLING_FACTOR):
    """Per axis ``(before, after)`` zero padding so that each dim divides ``factor``."""
    pads = []
    for n in dims:
        total = -n % factor
        pads.append((total // 2, total - total // 2))
    return tuple(pads)


def pad_volume(x: tf.Tensor, pads) -> tf.Tensor:
    """Pads a (B, X, Y, Z, C) tensor with zeros."""
    if not any(a or b for a, b in pads):
        return x
    return tf.pad(x, [(0, 0), *pads, (0, 0)])


def crop_volume(x: tf.Tensor, pads) -> tf.Tensor:
    """Inverse of :func:`pad_volume`."""
    if not any(a or b for a, b in pads):
        return x
    (x0, x1), (y0, y1), (z0, z1) = pads
    shape = x.shape
    return x[:, x0 : shape[1] - x1, y0 : shape[2] - y1, z0 : shape[3] - z1, :]


def check_dims(x: tf.Tensor, dims: Tuple[int, int, int], name: str):
    if x.shape.rank != 5 or tuple(x.shape[1:4]) != tuple(dims) or x.shape[-1] != 1:
        raise ValueError(
            f"{name} has to have shape (B, {dims[0]}, {dims[1]}, {dims[2]}, 1), "
            f"got {tuple(x.shape)}."
        )


def to_batch(x, dims: Sequence[int], dtype) -> Tuple[tf.Tensor, bool]:
    """
    Converts a single (X, Y, Z) volume or a (B, X, Y, Z) / (B, X, Y, Z, 1) batch to a
    channels-last batch. Returns the batch and whether the input was a single volume.
    """
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[np.newaxis]
    if x.ndim == 4:
        x = x[..., np.newaxis]
    if x.ndim != 5 or tuple(x.shape[1:4]) != tuple(dims) or x.shape[-1] != 1:
        raise ValueError(f"Expected volumes of dims {tuple(dims)}, got {x.shape}.")
    return tf.constant(x, dtype=dtype), single


def from_batch(y: tf.Tensor, single: bool) -> np.ndarray:
    """Inverse of :func:`to_batch`, returning float64 arrays without channel axis."""
    y = y.numpy().astype(np.float64)[..., 0]
    return y[0] if single else y


def as_steps(t, batch_size: int) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch_size,))
    if np.any(t < 0):
        raise ValueError(f"Diffusion step has to be non-negative, got {t}.")
    return t


def check_weights_finite(model: tf.keras.Model):
    for w in model.weights:
        if not np.all(np.isfinite(w.numpy())):
            raise ValueError(f"Weight {w.name} has non-finite values.")
