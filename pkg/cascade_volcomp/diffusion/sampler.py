"""
Reverse-process loops. The state is kept as float64 numpy arrays, noise is drawn from
a seeded numpy generator, so sampling is reproducible independent of TF's RNG.

A denoise function has the signature ``fn(x_t: np.ndarray, t: int) -> eps_hat``.
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ddim_step, ddpm_step
from .schedule import NoiseSchedule

try:
    from tqdm import tqdm
except ImportError:
    tqdm = None
    logging.info("Could not import `tqdm`. Progress bars not available.")

__all__ = ["ddim_sample", "ddim_timesteps", "ddpm_sample", "oracle_denoiser"]

DenoiseFn = Callable[[np.ndarray, int], np.ndarray]


def ddim_timesteps(T: int, steps: int) -> np.ndarray:
    """
    Descending sub-sequence ``T = tau_0 > tau_1 > ... > tau_steps = 0`` with (nearly)
    even spacing. ``steps`` is the number of DDIM steps.
    """
    if not 1 <= steps <= T:
        raise ValueError(f"Need 1 <= steps <= T, got steps={steps}, T={T}.")
    return np.round(np.linspace(T, 0, steps + 1)).astype(np.int64)


def _progress(iterable, progress: bool, desc: str):
    if progress and tqdm is not None:
        return tqdm(iterable, desc=desc, leave=False)
    return iterable


def _eps(denoise_fn: DenoiseFn, x: np.ndarray, t: int) -> np.ndarray:
    eps_hat = np.asarray(denoise_fn(x, int(t)), dtype=np.float64)
    if eps_hat.shape != x.shape:
        raise ValueError(
            f"Denoiser returned shape {eps_hat.shape}, expected {x.shape}."
        )
    return eps_hat


def ddim_sample(
    denoise_fn: DenoiseFn,
    shape: Sequence[int],
    sched: NoiseSchedule,
    steps: int = 50,
    seed: int = 0,
    eta: float = 0.0,
    timesteps: Optional[Sequence[int]] = None,
    x_T: Optional[np.ndarray] = None,  # noqa: N803
    progress: bool = False,
) -> np.ndarray:
    """
    DDIM sampling from pure Gaussian noise.

    Args:
        denoise_fn: Predicts the noise for ``(x_t, t)``.
        shape: Shape of the sample.
        sched: Noise schedule the denoiser was trained with.
        steps: Number of DDIM steps, ignored if ``timesteps`` is given.
        seed: Seed for the initial noise and, if ``eta > 0``, the step noise.
        eta: Stochasticity; ``eta = 0`` is deterministic DDIM.
        timesteps: Explicit descending sub-sequence ending in 0.
        x_T: Optional starting point instead of drawing noise.
        progress: Show a progress bar.

    Returns:
        The sample at t=0 as float64 array.
    """
    if timesteps is None:
        timesteps = ddim_timesteps(sched.T, steps)
    timesteps = [int(t) for t in timesteps]
    if timesteps[-1] != 0 or any(a <= b for a, b in zip(timesteps[:-1], timesteps[1:])):
        raise ValueError(f"Timesteps have to decrease strictly to 0: {timesteps}.")

    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    if x_T is None:
        x = rng.standard_normal(shape)
    else:
        x = np.asarray(x_T, dtype=np.float64)
        if x.shape != shape:
            raise ValueError(f"x_T has shape {x.shape}, expected {shape}.")

    pairs = list(zip(timesteps[:-1], timesteps[1:]))
    for t, t_prev in _progress(pairs, progress, "ddim"):
        eps_hat = _eps(denoise_fn, x, t)
        noise = rng.standard_normal(shape) if eta > 0 else None
        x = ddim_step(x, eps_hat, t, t_prev, sched, eta=eta, noise=noise).numpy()
    return x


def ddpm_sample(
    denoise_fn: DenoiseFn,
    shape: Sequence[int],
    sched: NoiseSchedule,
    seed: int = 0,
    progress: bool = False,
) -> np.ndarray:
    """Ancestral sampling through all T steps."""
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    x = rng.standard_normal(shape)
    for t in _progress(range(sched.T, 0, -1), progress, "ddpm"):
        eps_hat = _eps(denoise_fn, x, t)
        noise = rng.standard_normal(shape) if t > 1 else None
        x = ddpm_step(x, eps_hat, t, sched, noise=noise).numpy()
    return x


def oracle_denoiser(x0, sched: NoiseSchedule) -> DenoiseFn:
    """
    Denoiser that knows the clean sample and returns the exact noise,
    ``(x_t - sqrt(ab_t) * x0) / sqrt(1 - ab_t)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)

    def _denoise(x_t, t):
        alpha_bar = float(sched.alpha_bar(t))
        return (np.asarray(x_t, dtype=np.float64) - np.sqrt(alpha_bar) * x0) / np.sqrt(
            1.0 - alpha_bar
        )

    return _denoise
