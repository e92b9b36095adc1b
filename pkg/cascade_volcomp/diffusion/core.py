"""
Diffusion step math on tensors.

All functions accept numpy arrays or tensors and compute in the dtype of their first
argument. Schedule coefficients are computed in float64 and then cast. Steps ``t`` are
either scalars or, for batched inputs, one step per batch element.
"""
import numpy as np
import tensorflow as tf

from .schedule import NoiseSchedule

__all__ = [
    "ddim_step",
    "ddpm_step",
    "predict_x0",
    "q_sample",
    "training_loss",
]


def _as_tensor(x, dtype=None):
    x = tf.convert_to_tensor(x)
    if dtype is not None and x.dtype != dtype:
        x = tf.cast(x, dtype)
    return x


def _check_shapes(a, b, names):
    if not a.shape.is_compatible_with(b.shape):
        raise ValueError(
            f"Shape mismatch between {names[0]} {a.shape} and {names[1]} {b.shape}."
        )


def _coef(values, x: tf.Tensor) -> tf.Tensor:
    """
    Turns per-step coefficients into a tensor that broadcasts against ``x``. Scalars
    stay scalars, a vector of length B is reshaped to (B, 1, ..., 1).
    """
    values = np.asarray(values, dtype=np.float64)
    coef = tf.constant(values, dtype=x.dtype)
    if values.ndim == 1:
        coef = tf.reshape(coef, [-1] + [1] * (x.shape.rank - 1))
    return coef


def q_sample(x0, t, eps, sched: NoiseSchedule) -> tf.Tensor:
    """Closed-form forward process: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    x0 = _as_tensor(x0)
    eps = _as_tensor(eps, x0.dtype)
    _check_shapes(x0, eps, ("x0", "eps"))
    sched.check_step(t)
    alpha_bar = sched.alpha_bar(t)
    signal = _coef(np.sqrt(alpha_bar), x0) * x0
    return signal + _coef(np.sqrt(1.0 - alpha_bar), x0) * eps


def predict_x0(x_t, eps_hat, t, sched: NoiseSchedule) -> tf.Tensor:
    """Inverts :func:`q_sample`: (x_t - sqrt(1 - ab_t) * eps_hat) / sqrt(ab_t)."""
    x_t = _as_tensor(x_t)
    eps_hat = _as_tensor(eps_hat, x_t.dtype)
    _check_shapes(x_t, eps_hat, ("x_t", "eps_hat"))
    sched.check_step(t)
    alpha_bar = sched.alpha_bar(t)
    return (x_t - _coef(np.sqrt(1.0 - alpha_bar), x_t) * eps_hat) / _coef(
        np.sqrt(alpha_bar), x_t
    )


def ddim_step(
    x_t,
    eps_hat,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
    eta: float = 0.0,
    noise=None,
) -> tf.Tensor:
    """
    One DDIM step from ``t`` to ``t_prev < t``. For ``eta = 0`` the step is
    deterministic and ``noise`` is ignored.
    """
    if not 0 <= t_prev < t:
        raise ValueError(f"Need 0 <= t_prev < t, got t={t}, t_prev={t_prev}.")
    if eta < 0:
        raise ValueError(f"eta has to be non-negative, got {eta}.")
    sched.check_step(t)

    x_t = _as_tensor(x_t)
    eps_hat = _as_tensor(eps_hat, x_t.dtype)
    _check_shapes(x_t, eps_hat, ("x_t", "eps_hat"))

    ab_t = float(sched.alpha_bar(t))
    ab_prev = float(sched.alpha_bar(t_prev))
    sigma = (
        eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
    )
    # Rounding can make the radicand slightly negative for eta = 1.
    dir_coef = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))

    x0_hat = predict_x0(x_t, eps_hat, t, sched)
    x_prev = _coef(np.sqrt(ab_prev), x_t) * x0_hat + _coef(dir_coef, x_t) * eps_hat
    if sigma > 0:
        if noise is None:
            raise ValueError("noise is required for eta > 0.")
        noise = _as_tensor(noise, x_t.dtype)
        _check_shapes(x_t, noise, ("x_t", "noise"))
        x_prev = x_prev + _coef(sigma, x_t) * noise
    return x_prev


def ddpm_step(x_t, eps_hat, t: int, sched: NoiseSchedule, noise=None) -> tf.Tensor:
    """
    One ancestral step with fixed variance beta_t. The mean is

        mu = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t).

    At ``t = 1`` we return ``mu`` and ignore ``noise``.
    """
    x_t = _as_tensor(x_t)
    eps_hat = _as_tensor(eps_hat, x_t.dtype)
    _check_shapes(x_t, eps_hat, ("x_t", "eps_hat"))
    sched.check_step(t)

    beta = float(sched.beta(t))
    alpha = float(sched.alpha(t))
    ab_t = float(sched.alpha_bar(t))
    mu = (x_t - _coef(beta / np.sqrt(1.0 - ab_t), x_t) * eps_hat) / _coef(
        np.sqrt(alpha), x_t
    )
    if t == 1:
        return mu
    if noise is None:
        raise ValueError(f"noise is required for t={t} > 1.")
    noise = _as_tensor(noise, x_t.dtype)
    _check_shapes(x_t, noise, ("x_t", "noise"))
    return mu + _coef(np.sqrt(beta), x_t) * noise


def training_loss(eps, eps_hat) -> tf.Tensor:
    """Mean squared error over all voxels and the batch."""
    eps_hat = _as_tensor(eps_hat)
    eps = _as_tensor(eps, eps_hat.dtype)
    _check_shapes(eps, eps_hat, ("eps", "eps_hat"))
    return tf.reduce_mean(tf.square(eps - eps_hat))
