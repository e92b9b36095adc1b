"""
Pure operations on volumes. All functions return new volumes.
"""
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from .volume import Volume3D

__all__ = [
    "crop_pad_to",
    "normalize_intensity",
    "prepare_volume",
    "resample_down2",
    "rotate",
    "upsample_trilinear",
]


def normalize_intensity(v: Volume3D) -> Volume3D:
    """Affine min-max map of intensities to [0, 1]."""
    x = v.voxels.astype(np.float64)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        raise ValueError(f"Cannot normalize constant volume (all values {lo}).")
    x = (x - lo) / (hi - lo)
    # Float32 rounding can only push values towards the ends of the interval.
    return v.with_voxels(np.clip(x, 0.0, 1.0))


def resample_down2(v: Volume3D) -> Volume3D:
    """Factor-2 mean pooling: halves dims and doubles spacing."""
    nx, ny, nz = v.dims
    if nx % 2 or ny % 2 or nz % 2:
        raise ValueError(f"All dims have to be even for downsampling, got {v.dims}.")
    x = v.voxels.astype(np.float64)
    x = x.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2).mean(axis=(1, 3, 5))
    return Volume3D(x, tuple(2 * s for s in v.spacing))


def crop_pad_to(v: Volume3D, target_dims: Sequence[int]) -> Volume3D:
    """
    Brings ``v`` to ``target_dims`` by center-cropping axes that are too large and
    symmetrically zero-padding axes that are too small. When the difference is odd,
    the extra voxel is cropped from / padded at the end.
    """
    target_dims = tuple(int(n) for n in target_dims)
    if len(target_dims) != 3 or min(target_dims) <= 0:
        raise ValueError(f"Target dims have to be 3 positive ints, got {target_dims}.")

    x = v.voxels
    slices, pads = [], []
    for n, t in zip(v.dims, target_dims):
        if n >= t:
            start = (n - t) // 2
            slices.append(slice(start, start + t))
            pads.append((0, 0))
        else:
            before = (t - n) // 2
            slices.append(slice(None))
            pads.append((before, t - n - before))
    x = np.pad(x[tuple(slices)], pads, mode="constant", constant_values=0.0)
    return v.with_voxels(x)


def prepare_volume(v: Volume3D, dims: Sequence[int]) -> Volume3D:
    """
    Brings a scan onto a model grid. A scan at exactly twice ``dims`` is downsampled
    once, then the result is cropped or padded to ``dims``.
    """
    dims = tuple(int(n) for n in dims)
    if v.dims == tuple(2 * n for n in dims):
        v = resample_down2(v)
    return crop_pad_to(v, dims)


def upsample_trilinear(v: Volume3D) -> Volume3D:
    """
    Factor-2 trilinear upsampling on the cell-centered grid. Used as the evaluation
    baseline for super-resolution.
    """
    x = ndimage.zoom(
        v.voxels.astype(np.float64), 2, order=1, mode="nearest", grid_mode=True
    )
    return Volume3D(x, tuple(s / 2 for s in v.spacing))


def _rotation_matrix(angles_deg: Sequence[float]) -> np.ndarray:
    ax, ay, az = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    rx = np.array(
        [[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]]
    )
    ry = np.array(
        [[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]]
    )
    rz = np.array(
        [[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]]
    )
    return rz @ ry @ rx


def rotate(v: Volume3D, angles_deg: Tuple[float, float, float]) -> Volume3D:
    """
    Rotates ``v`` about its center by the given angles (degrees) around the x, y and z
    axes. Trilinear resampling, zeros outside the original field of view.
    """
    if len(angles_deg) != 3:
        raise ValueError(f"Need three rotation angles, got {angles_deg}.")
    if not np.any(angles_deg):
        return v

    # The rotation acts in physical space, so we conjugate with the voxel spacing.
    spacing = np.asarray(v.spacing, dtype=np.float64)
    rot = _rotation_matrix(angles_deg)
    # `affine_transform` maps output coordinates to input coordinates, so we need
    # the inverse rotation.
    matrix = np.diag(1.0 / spacing) @ rot.T @ np.diag(spacing)
    center = (np.asarray(v.dims, dtype=np.float64) - 1.0) / 2.0
    offset = center - matrix @ center

    x = ndimage.affine_transform(
        v.voxels.astype(np.float64),
        matrix,
        offset=offset,
        order=1,
        mode="constant",
        cval=0.0,
    )
    return v.with_voxels(x)
