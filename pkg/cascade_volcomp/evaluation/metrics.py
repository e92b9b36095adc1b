"""
Volumetric image quality metrics. Both metrics are computed over the whole volume.
"""
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from ..errors import ConfigError
from ..volume import Volume3D

__all__ = ["SsimParams", "psnr", "ssim3d"]

VolumeLike = Union[Volume3D, np.ndarray]


def _pair(a: VolumeLike, b: VolumeLike):
    a = a.voxels if isinstance(a, Volume3D) else np.asarray(a)
    b = b.voxels if isinstance(b, Volume3D) else np.asarray(b)
    if a.ndim != 3 or a.shape != b.shape:
        raise ValueError(
            f"Volumes have to have the same 3D dims, got {a.shape}, {b.shape}."
        )
    return a.astype(np.float64), b.astype(np.float64)


def psnr(a: VolumeLike, b: VolumeLike, data_range: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio ``10 * log10(data_range^2 / MSE)`` in dB.

    Returns ``math.inf`` for identical volumes.
    """
    if data_range <= 0:
        raise ValueError(f"data_range has to be positive, got {data_range}.")
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(data_range**2 / mse))


@dataclass
class SsimParams:
    """
    Parameters of the structural similarity index.

    Attributes:
        window: Side of the cubic, uniformly weighted window in voxels.
        k1: Luminance stabilization constant, ``C1 = (k1 * data_range)^2``.
        k2: Contrast stabilization constant, ``C2 = (k2 * data_range)^2``.
        data_range: Dynamic range of the intensities.
    """

    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"window has to be odd and >= 3, got {self.window}.")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ConfigError(
                f"k1 and k2 have to be positive, got {self.k1}, {self.k2}."
            )
        if self.data_range <= 0:
            raise ConfigError(f"data_range has to be positive, got {self.data_range}.")


def ssim3d(a: VolumeLike, b: VolumeLike, p: Optional[SsimParams] = None) -> float:
    """
    Mean SSIM over all cubic windows that lie completely inside the volume. Window
    statistics are population (biased) moments.
    """
    p = p or SsimParams()
    a, b = _pair(a, b)
    if min(a.shape) < p.window:
        raise ValueError(
            f"Window {p.window} does not fit into volume of dims {a.shape}."
        )

    c1 = (p.k1 * p.data_range) ** 2
    c2 = (p.k2 * p.data_range) ** 2

    def _mean(x):
        return ndimage.uniform_filter(x, size=p.window, mode="constant")

    # The filter centers the window on each voxel; we keep only windows that fit.
    r = p.window // 2
    valid = tuple(slice(r, n - r) for n in a.shape)
    mu_a = _mean(a)[valid]
    mu_b = _mean(b)[valid]
    var_a = _mean(a * a)[valid] - mu_a**2
    var_b = _mean(b * b)[valid] - mu_b**2
    cov = _mean(a * b)[valid] - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
