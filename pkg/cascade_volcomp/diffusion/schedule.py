"""
Noise schedules. Steps are indexed ``t = 1..T`` and we use the convention
``alpha_bar(0) = 1``.
"""
from dataclasses import dataclass

import numpy as np

__all__ = ["DiffusionState", "NoiseSchedule", "make_linear_schedule"]


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    Variance schedule of the forward process.

    Parameters:
        betas: ``(beta_1, ..., beta_T)``, all in (0, 1).
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64, copy=True)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas has to be a non-empty 1D sequence.")
        if not np.all((betas > 0) & (betas < 1)):
            raise ValueError("All betas have to be in (0, 1).")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

        alphas = 1.0 - betas
        # Index 0 holds alpha_bar(0) = 1, so alpha_bars_ext[t] = alpha_bar(t).
        alpha_bars_ext = np.concatenate([[1.0], np.cumprod(alphas)])
        for arr in (alphas, alpha_bars_ext):
            arr.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars_ext", alpha_bars_ext)

    @property
    def T(self) -> int:  # noqa: N802
        return int(self.betas.size)

    @property
    def alpha_bars(self) -> np.ndarray:
        """``(alpha_bar_1, ..., alpha_bar_T)``."""
        return self.alpha_bars_ext[1:]

    def check_step(self, t, allow_zero: bool = False):
        """Raises ``ValueError`` unless all entries of ``t`` are valid steps."""
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer):
            raise ValueError(f"Steps have to be integers, got {t.dtype}.")
        lo = 0 if allow_zero else 1
        if np.any(t < lo) or np.any(t > self.T):
            raise ValueError(f"Step out of range [{lo}, {self.T}]: {t}.")

    def beta(self, t):
        self.check_step(t)
        return self.betas[np.asarray(t) - 1]

    def alpha(self, t):
        self.check_step(t)
        return self.alphas[np.asarray(t) - 1]

    def alpha_bar(self, t):
        self.check_step(t, allow_zero=True)
        return self.alpha_bars_ext[np.asarray(t)]


def make_linear_schedule(beta_start: float, beta_end: float, T: int) -> NoiseSchedule:
    """Betas increase linearly from ``beta_start`` at t=1 to ``beta_end`` at t=T."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T has to be a positive int, got {T}.")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(
            f"Need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})."
        )
    if T == 1 and beta_start != beta_end:
        raise ValueError("A single-step schedule needs beta_start == beta_end.")
    betas = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    return NoiseSchedule(betas)


@dataclass(frozen=True, eq=False)
class DiffusionState:
    """Noisy sample ``x_t`` at step ``t`` of the forward process."""

    x_t: np.ndarray
    t: int

    def __post_init__(self):
        if not isinstance(self.t, (int, np.integer)) or self.t < 0:
            raise ValueError(f"Step has to be a non-negative int, got {self.t}.")
        if not np.all(np.isfinite(self.x_t)):
            raise ValueError("x_t contains non-finite values.")

    def check(self, sched: NoiseSchedule):
        sched.check_step(self.t, allow_zero=True)
