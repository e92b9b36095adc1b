"""
Threshold segmentation of phantom intensities into tissue classes and tissue volume
measurement. Phantom classes have separable intensities, so fixed thresholds recover
the label map exactly on noise-free phantoms.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..tissue import CLASS_LABELS, TissueLabel
from ..volume import Volume3D

__all__ = ["SegmentationConfig", "segment_tissues", "tissue_volumes"]


@dataclass
class SegmentationConfig:
    """
    Attributes:
        thresholds: Cut points between CSF/GM and GM/WM intensities.
        background_cut: Voxels below this intensity are background. -1 disables the
            cut, i.e., everything below ``thresholds[0]`` is labelled CSF.
    """

    thresholds: Tuple[float, float] = (0.35, 0.65)
    background_cut: float = 0.1

    def __post_init__(self):
        try:
            _check_thresholds(self.thresholds, self.cut)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @property
    def cut(self) -> Optional[float]:
        return self.background_cut if self.background_cut != -1.0 else None


def _check_thresholds(thresholds: Sequence[float], background_cut: Optional[float]):
    if len(thresholds) != 2:
        raise ValueError(f"Need two thresholds, got {thresholds}.")
    lo, hi = thresholds
    if not 0.0 < lo < hi < 1.0:
        raise ValueError(
            f"Thresholds have to increase strictly within (0, 1), got {thresholds}."
        )
    if background_cut is not None and not 0.0 < background_cut < lo:
        raise ValueError(
            f"background_cut has to be in (0, {lo}), got {background_cut}."
        )


def segment_tissues(
    v: Volume3D,
    thresholds: Sequence[float] = (0.35, 0.65),
    background_cut: Optional[float] = None,
) -> np.ndarray:
    """
    Labels each voxel by its intensity bin.

    * ``x < thresholds[0]``: CSF (or background below ``background_cut``),
    * ``thresholds[0] <= x < thresholds[1]``: GM,
    * ``x >= thresholds[1]``: WM.

    Returns:
        ``uint8`` label volume with codes of :class:`TissueLabel`.
    """
    _check_thresholds(thresholds, background_cut)
    x = v.voxels.astype(np.float64)
    labels = np.digitize(x, thresholds).astype(np.uint8) + np.uint8(TissueLabel.CSF)
    if background_cut is not None:
        labels[x < background_cut] = TissueLabel.BACKGROUND
    return labels


def tissue_volumes(
    labels: np.ndarray, spacing: Sequence[float]
) -> Dict[str, float]:
    """Volume in mm^3 per tissue class: voxel count times voxel volume."""
    voxel_volume = float(np.prod(np.asarray(spacing, dtype=np.float64)))
    labels = np.asarray(labels)
    return {
        name: float(np.count_nonzero(labels == label)) * voxel_volume
        for name, label in CLASS_LABELS.items()
    }
