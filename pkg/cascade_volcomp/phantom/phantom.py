"""
Synthetic longitudinal cohorts of nested-ellipsoid brain phantoms.

Each phantom has three nested, axis-aligned ellipsoids: the WM proxy as core, the GM
proxy as middle shell and the CSF proxy as outer shell. Shell volumes follow the
log-linear mixed-effects law

    V_ij = beta0 + beta1 * ln(age_ij) + b_i + e_ij,

so the analytic volumes are an exact oracle for segmentation and trajectory fitting.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from ..errors import ConfigError
from ..tissue import TISSUE_CLASSES, TissueLabel
from ..volume import (
    LongitudinalCohort,
    ScanRecord,
    Volume3D,
    normalize_intensity,
    write_cohort,
)

__all__ = [
    "ContrastLaw",
    "GrowthLaw",
    "PhantomConfig",
    "PhantomTruth",
    "generate_cohort",
    "mask_missing",
    "write_phantom_cohort",
]

# Ages at which the growth law has to produce positive volumes
LAW_AGE_RANGE = (0.5, 26.0)
# Smallest semi-axis of any class ellipsoid, in voxels of the grid it is painted on
MIN_SEMI_AXIS_VOXELS = 4.0
# Intensity classes have to stay this far apart after accounting for noise
MIN_INTENSITY_GAP = 0.1


@dataclass
class GrowthLaw:
    """
    Log-linear mixed-effects growth law. Per-class tuples are ordered (CSF, GM, WM).

    Parameters:
        beta0: Volume intercept in mm^3.
        beta1: Slope in mm^3 per log-month.
        sigma_subject: Std of the per-subject, per-class random intercept in mm^3.
        sigma_noise: Std of the per-scan volume jitter in mm^3.
    """

    beta0: Tuple[float, float, float] = (60.0, 200.0, 120.0)
    beta1: Tuple[float, float, float] = (25.0, 150.0, 90.0)
    sigma_subject: float = 8.0
    sigma_noise: float = 4.0

    def __post_init__(self):
        if len(self.beta0) != 3 or len(self.beta1) != 3:
            raise ConfigError("beta0 and beta1 need one entry per tissue class.")
        if self.sigma_subject < 0 or self.sigma_noise < 0:
            raise ConfigError("Variance components have to be non-negative.")
        for age in LAW_AGE_RANGE:
            if np.any(self.mean_volumes(age) <= 0):
                raise ConfigError(
                    f"Growth law gives non-positive mean volumes at {age} months."
                )

    def mean_volumes(self, age_months: float) -> np.ndarray:
        """Population volumes (CSF, GM, WM) at the given age."""
        return np.asarray(self.beta0) + np.asarray(self.beta1) * math.log(age_months)


@dataclass
class ContrastLaw:
    """
    Class intensities (CSF, GM, WM) as a function of age. Linear interpolation between
    the young setting at ``young_age`` and the mature setting from ``mature_age`` on.
    """

    young: Tuple[float, float, float] = (0.25, 0.45, 0.65)
    mature: Tuple[float, float, float] = (0.2, 0.5, 0.8)
    young_age: float = 3.0
    mature_age: float = 9.0

    def __post_init__(self):
        if not 0 < self.young_age < self.mature_age:
            raise ConfigError("Need 0 < young_age < mature_age.")
        for values in (self.young, self.mature):
            if len(values) != 3 or not all(0.0 < v <= 1.0 for v in values):
                raise ConfigError(f"Class intensities have to be in (0, 1]: {values}.")

    def intensities(self, age_months: float) -> np.ndarray:
        w = (age_months - self.young_age) / (self.mature_age - self.young_age)
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * np.asarray(self.young) + w * np.asarray(self.mature)


@dataclass
class PhantomConfig:
    """
    Configuration of the phantom generator.

    Parameters:
        dims: Low-res grid of the generate stage. Scans are stored at ``scale * dims``.
        spacing: Low-res voxel size in mm.
        n_subjects: Number of subjects.
        age_grid: Scan ages in months; one scan per subject per age.
        contrast_law: Age-dependent class intensities.
        seed: Seed for all random draws.
        scale: Ratio between stored and low-res resolution.
        intensity_noise: Std of i.i.d. Gaussian voxel noise, before clipping to [0, 1].
        normalize: If ``True``, each scan is min-max normalized.
        aspect: Ratio of ellipsoid semi-axes.
        center_offset: Shift of the ellipsoid center from the grid center in mm.
            Breaks the symmetry between phantom and voxel lattice.
    """

    dims: Tuple[int, int, int] = (20, 24, 20)
    spacing: Tuple[float, float, float] = (0.8, 0.8, 0.8)
    n_subjects: int = 10
    age_grid: Tuple[float, ...] = (3.0, 6.0, 9.0, 12.0, 18.0, 24.0)
    contrast_law: ContrastLaw = field(default_factory=ContrastLaw)
    seed: int = 0
    scale: int = 2
    intensity_noise: float = 0.01
    normalize: bool = True
    aspect: Tuple[float, float, float] = (1.0, 1.2, 1.0)
    center_offset: Tuple[float, float, float] = (0.11, -0.17, 0.23)

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ConfigError(f"dims have to be 3 positive ints, got {self.dims}.")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ConfigError(f"spacing has to be positive, got {self.spacing}.")
        if self.n_subjects < 1:
            raise ConfigError("Need at least one subject.")
        if self.scale < 1:
            raise ConfigError(f"scale has to be a positive int, got {self.scale}.")
        if self.intensity_noise < 0:
            raise ConfigError("intensity_noise has to be non-negative.")
        ages = list(self.age_grid)
        if not ages:
            raise ConfigError("age_grid is empty.")
        lo, hi = LAW_AGE_RANGE
        if not all(lo < a <= hi for a in ages):
            raise ConfigError(f"Ages have to be in ({lo}, {hi}], got {ages}.")
        if any(a >= b for a, b in zip(ages[:-1], ages[1:])):
            raise ConfigError(f"age_grid has to be strictly increasing: {ages}.")

        for age in ages:
            levels = np.sort(np.append(self.contrast_law.intensities(age), 0.0))
            gap = np.min(np.diff(levels)) - 6 * self.intensity_noise
            if gap < MIN_INTENSITY_GAP - 1e-12:
                raise ConfigError(
                    f"Intensity classes at {age} months are not separable: smallest "
                    f"gap after noise is {gap:.3f} < {MIN_INTENSITY_GAP}."
                )

    @property
    def stored_dims(self) -> Tuple[int, int, int]:
        return tuple(self.scale * n for n in self.dims)

    @property
    def stored_spacing(self) -> Tuple[float, float, float]:
        return tuple(s / self.scale for s in self.spacing)


@dataclass
class PhantomTruth:
    """
    Ground truth for one scan.

    Parameters:
        volumes: Target class volumes in mm^3, keyed by class name.
        semi_axes: Semi-axes in mm of the outer boundary of each class.
        labels: Label map at stored resolution, see :class:`TissueLabel`.
    """

    volumes: Dict[str, float]
    semi_axes: Dict[str, Tuple[float, float, float]]
    labels: np.ndarray


def _semi_axes(volume: float, aspect) -> np.ndarray:
    """Semi-axes of an ellipsoid with given volume and axis ratios."""
    aspect = np.asarray(aspect, dtype=np.float64)
    s = (3.0 * volume / (4.0 * math.pi * np.prod(aspect))) ** (1.0 / 3.0)
    return s * aspect


def _check_geometry(cfg: PhantomConfig, axes: Dict[str, np.ndarray], scan_id: str):
    extent = np.asarray(cfg.dims) * np.asarray(cfg.spacing)
    outer = axes["csf"] + np.abs(np.asarray(cfg.center_offset))
    if np.any(outer > extent / 2):
        raise ConfigError(
            f"Phantom {scan_id} does not fit the grid: needs half-extent {outer} mm, "
            f"grid has {extent / 2} mm. Increase dims or spacing."
        )
    spacing = np.asarray(cfg.stored_spacing)
    for name, semi_axes in axes.items():
        voxels = semi_axes / spacing
        if np.any(voxels < MIN_SEMI_AXIS_VOXELS):
            raise ConfigError(
                f"Phantom {scan_id}: {name} ellipsoid has semi-axes of {voxels} "
                f"voxels, need at least {MIN_SEMI_AXIS_VOXELS}. The grid is too coarse."
            )


def _voxel_centers(cfg: PhantomConfig) -> List[np.ndarray]:
    """Voxel center coordinates in mm, relative to the ellipsoid center."""
    coords = []
    for n, s, c in zip(cfg.stored_dims, cfg.stored_spacing, cfg.center_offset):
        coords.append((np.arange(n) + 0.5 - n / 2) * s - c)
    return np.meshgrid(*coords, indexing="ij", sparse=True)


def _label_map(grid, axes: Dict[str, np.ndarray]) -> np.ndarray:
    x, y, z = grid
    labels = np.zeros(np.broadcast(x, y, z).shape, dtype=np.uint8)
    # Paint from the outside in, so inner classes overwrite outer ones.
    for name, label in (
        ("csf", TissueLabel.CSF),
        ("gm", TissueLabel.GM),
        ("wm", TissueLabel.WM),
    ):
        a, b, c = axes[name]
        inside = (x / a) ** 2 + (y / b) ** 2 + (z / c) ** 2 <= 1.0
        labels[inside] = label
    return labels


def _generate_subject(cfg, law, subject_idx, grid):
    subject_id = f"sub-{subject_idx:03d}"
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, subject_idx]))
    intercepts = rng.normal(0.0, law.sigma_subject, size=3)

    records, truth = [], {}
    for age in cfg.age_grid:
        scan_id = f"{subject_id}_{age:g}mo"
        jitter = rng.normal(0.0, law.sigma_noise, size=3)
        volumes = law.mean_volumes(age) + intercepts + jitter
        if np.any(volumes <= 0):
            raise ConfigError(
                f"Growth law gives non-positive volume for {scan_id}: {volumes}."
            )

        # Outer boundary of each class encloses all classes inside it.
        csf, gm, wm = volumes
        axes = {
            "wm": _semi_axes(wm, cfg.aspect),
            "gm": _semi_axes(wm + gm, cfg.aspect),
            "csf": _semi_axes(wm + gm + csf, cfg.aspect),
        }
        _check_geometry(cfg, axes, scan_id)
        labels = _label_map(grid, axes)

        levels = np.append(0.0, cfg.contrast_law.intensities(age))
        image = levels[labels]
        if cfg.intensity_noise > 0:
            image = image + rng.normal(0.0, cfg.intensity_noise, size=image.shape)
        image = np.clip(image, 0.0, 1.0)
        volume = Volume3D(image, cfg.stored_spacing)
        if cfg.normalize:
            volume = normalize_intensity(volume)

        record = ScanRecord(subject_id=subject_id, age_months=age, volume=volume)
        records.append(record)
        truth[record.key] = PhantomTruth(
            volumes={k: float(v) for k, v in zip(TISSUE_CLASSES, volumes)},
            semi_axes={k: tuple(float(a) for a in v) for k, v in axes.items()},
            labels=labels,
        )
    return subject_id, records, truth


def generate_cohort(
    cfg: PhantomConfig, law: GrowthLaw
) -> Tuple[LongitudinalCohort, Dict[Tuple[str, float], PhantomTruth]]:
    """
    Generates one phantom scan per subject per grid age.

    Each subject draws from its own random stream derived from ``(cfg.seed, index)``,
    so subjects can be generated independently and the result is deterministic.

    Returns:
        The cohort and a dict mapping ``(subject_id, age)`` to :class:`PhantomTruth`.
    """
    grid = _voxel_centers(cfg)
    subjects, truth = {}, {}
    for idx in range(cfg.n_subjects):
        subject_id, records, subject_truth = _generate_subject(cfg, law, idx, grid)
        subjects[subject_id] = records
        truth.update(subject_truth)
    cohort = LongitudinalCohort(subjects=subjects, age_grid=cfg.age_grid)
    logging.info(
        f"Generated {cohort.count} phantom scans of {cfg.n_subjects} subjects at "
        f"dims {cfg.stored_dims}."
    )
    return cohort, truth


def mask_missing(
    cohort: LongitudinalCohort, missing_fraction: float, seed: int
) -> Tuple[LongitudinalCohort, List[ScanRecord]]:
    """
    Holds out ``round(missing_fraction * nb_scans)`` scans, uniformly at random over
    (subject, age) pairs, such that every subject keeps at least one scan.

    Returns:
        The remaining cohort and the held-out scans, ordered as in the cohort.
    """
    if not 0.0 <= missing_fraction < 1.0:
        raise ConfigError(
            f"missing_fraction has to be in [0, 1), got {missing_fraction}."
        )

    records = cohort.records()
    nb_held_out = int(round(missing_fraction * len(records)))
    nb_subjects = sum(1 for scans in cohort.subjects.values() if scans)
    if nb_held_out > len(records) - nb_subjects:
        raise ConfigError(
            f"Cannot hold out {nb_held_out} of {len(records)} scans while every one of "
            f"{nb_subjects} subjects keeps a scan. Lower missing_fraction."
        )

    rng = np.random.default_rng(seed)
    remaining = {sid: len(scans) for sid, scans in cohort.subjects.items()}
    held_out = set()
    for idx in rng.permutation(len(records)):
        if len(held_out) == nb_held_out:
            break
        record = records[idx]
        if remaining[record.subject_id] > 1:
            remaining[record.subject_id] -= 1
            held_out.add(idx)

    held_out = [records[idx] for idx in sorted(held_out)]
    return cohort.without(held_out), held_out


def write_phantom_cohort(
    directory,
    cohort: LongitudinalCohort,
    truth: Dict[Tuple[str, float], PhantomTruth],
    held_out=(),
    metadata=None,
) -> Path:
    """Writes a phantom cohort with its ground-truth volumes to ``directory``."""
    volumes = {key: t.volumes for key, t in truth.items()}
    return write_cohort(
        directory, cohort, held_out=held_out, ground_truth=volumes, metadata=metadata
    )
