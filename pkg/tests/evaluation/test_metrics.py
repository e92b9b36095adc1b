import itertools
import math

import numpy as np
import pytest

from cascade_volcomp.errors import ConfigError
from cascade_volcomp.evaluation import SsimParams, psnr, ssim3d
from cascade_volcomp.volume import Volume3D


def _psnr_reference(a, b, data_range=1.0):
    mse = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    return 10.0 * math.log10(data_range**2 / mse)


def _ssim_reference(a, b, p):
    """Loops over every window that fits into the volume."""
    c1 = (p.k1 * p.data_range) ** 2
    c2 = (p.k2 * p.data_range) ** 2
    w = p.window
    values = []
    ranges = [range(n - w + 1) for n in a.shape]
    for i, j, k in itertools.product(*ranges):
        wa = a[i : i + w, j : j + w, k : k + w].astype(np.float64)
        wb = b[i : i + w, j : j + w, k : k + w].astype(np.float64)
        mu_a, mu_b = wa.mean(), wb.mean()
        var_a = ((wa - mu_a) ** 2).mean()
        var_b = ((wb - mu_b) ** 2).mean()
        cov = ((wa - mu_a) * (wb - mu_b)).mean()
        values.append(
            (2 * mu_a * mu_b + c1)
            * (2 * cov + c2)
            / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
        )
    return np.mean(values)


def _random_pair(seed, dims):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=dims)
    b = np.clip(a + rng.normal(scale=0.1, size=dims), 0.0, 1.0)
    return Volume3D(a), Volume3D(b)


def test_psnr_constant_offset():
    a = Volume3D(np.full((8, 8, 8), 0.3))
    b = Volume3D(np.full((8, 8, 8), 0.4))
    assert abs(psnr(a, b) - 20.0) < 1e-4
    assert psnr(a, a) == math.inf
    # data_range enters squared
    assert abs(psnr(a, b, data_range=10.0) - 40.0) < 1e-4


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("dims", [(8, 8, 8), (9, 10, 8)])
def test_psnr_reference(seed, dims):
    a, b = _random_pair(seed, dims)
    assert abs(psnr(a, b) - _psnr_reference(a.voxels, b.voxels)) < 1e-6


def test_psnr_errors():
    a = Volume3D(np.zeros((8, 8, 8)))
    with pytest.raises(ValueError):
        psnr(a, Volume3D(np.zeros((8, 8, 4))))
    with pytest.raises(ValueError):
        psnr(a, a, data_range=0.0)


def test_ssim_constant_volumes():
    """For constant volumes only the luminance term remains."""
    a = Volume3D(np.full((8, 8, 8), 0.2))
    b = Volume3D(np.full((8, 8, 8), 0.4))
    c1 = 1e-4
    expected = (2 * 0.2 * 0.4 + c1) / (0.2**2 + 0.4**2 + c1)
    assert abs(ssim3d(a, b) - expected) < 1e-6
    assert abs(ssim3d(a, b) - 0.80010) < 1e-4


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("window", [3, 7])
def test_ssim_reference(seed, window):
    a, b = _random_pair(seed, (9, 8, 10))
    p = SsimParams(window=window)
    assert abs(ssim3d(a, b, p) - _ssim_reference(a.voxels, b.voxels, p)) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_ssim_properties(seed):
    a, b = _random_pair(seed, (8, 8, 8))
    assert abs(ssim3d(a, a) - 1.0) < 1e-9
    assert abs(ssim3d(a, b) - ssim3d(b, a)) < 1e-12
    assert -1.0 <= ssim3d(a, b) < 1.0
    # Arrays and volumes are scored alike
    assert ssim3d(a.voxels, b.voxels) == ssim3d(a, b)


def test_ssim_errors():
    a = Volume3D(np.zeros((8, 8, 6)))
    with pytest.raises(ValueError):
        ssim3d(a, a)
    with pytest.raises(ValueError):
        ssim3d(a, Volume3D(np.zeros((8, 8, 8))))
    for kwargs in [{"window": 4}, {"window": 1}, {"k1": 0.0}, {"data_range": -1.0}]:
        with pytest.raises(ConfigError):
            SsimParams(**kwargs)
