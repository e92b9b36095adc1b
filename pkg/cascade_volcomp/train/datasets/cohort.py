"""
Training data drawn from a longitudinal cohort.

* Generate stage: a subject with at least two scans is sampled, then an ordered pair of
  distinct scans of that subject. One is the target, the other (randomly rotated) the
  guidance volume, and the target age is the age of the target scan.
* Refine stage: a scan is sampled, its high-resolution version is the target and its
  2x downsampled version the condition.
"""
import logging
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
import tensorflow as tf

from ...architectures import GuidanceBundle
from ...errors import DataError
from ...volume import (
    LongitudinalCohort,
    Volume3D,
    crop_pad_to,
    prepare_volume,
    resample_down2,
    rotate,
)

__all__ = [
    "GeneratePairDataset",
    "MAX_ROTATION_DEGREES",
    "SrPairDataset",
    "augment_guidance",
    "make_sr_pair",
    "make_training_pair",
]

MAX_ROTATION_DEGREES = 5.0

SeedLike = Union[int, Sequence[int], np.random.Generator]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def augment_guidance(v: Volume3D, max_degrees: float, seed: SeedLike) -> Volume3D:
    """
    Rotates ``v`` about its center by independent angles drawn uniformly from
    ``[0, max_degrees]`` around the x, y and z axes. Trilinear resampling, zero fill.
    """
    if not 0.0 <= max_degrees <= MAX_ROTATION_DEGREES:
        raise ValueError(
            f"max_degrees has to be in [0, {MAX_ROTATION_DEGREES}], got {max_degrees}."
        )
    if max_degrees == 0.0:
        return v
    angles = _rng(seed).uniform(0.0, max_degrees, size=3)
    return rotate(v, tuple(angles))


def _eligible_subjects(cohort: LongitudinalCohort):
    subjects = [sid for sid in cohort.subject_ids if len(cohort.scans_of(sid)) >= 2]
    if not subjects:
        raise DataError("Need at least one subject with two or more scans.")
    return subjects


def make_training_pair(
    cohort: LongitudinalCohort,
    seed: SeedLike,
    dims: Optional[Sequence[int]] = None,
    max_degrees: float = MAX_ROTATION_DEGREES,
) -> Tuple[Volume3D, GuidanceBundle]:
    """
    Samples one training pair for the generate stage.

    Args:
        cohort: Cohort with at least one subject having two scans.
        seed: Seed or generator. A generator is advanced, so repeated calls with the
            same generator produce a sequence of pairs.
        dims: If given, both volumes are brought onto this grid with
            :func:`prepare_volume`.
        max_degrees: Maximal rotation of the guidance volume, 0 disables augmentation.

    Returns:
        The target volume ``x0`` and the guidance bundle.
    """
    rng = _rng(seed)
    subjects = _eligible_subjects(cohort)
    subject_id = subjects[rng.integers(len(subjects))]
    scans = cohort.scans_of(subject_id)
    target_idx, guide_idx = rng.choice(len(scans), size=2, replace=False)
    target, guide = scans[target_idx], scans[guide_idx]

    x0, guide_volume = target.volume, guide.volume
    if dims is not None:
        x0 = prepare_volume(x0, dims)
        guide_volume = prepare_volume(guide_volume, dims)
    guide_volume = augment_guidance(
        guide_volume, max_degrees, seed=int(rng.integers(2**32))
    )
    return x0, GuidanceBundle(guide_volume, target.age_months)


class GeneratePairDataset:
    """
    Infinite stream of generate-stage batches, each a dictionary with

    * ``x0``: targets (B, X, Y, Z, 1),
    * ``guide``: guidance volumes (B, X, Y, Z, 1),
    * ``age``: target ages (B,).

    Iterating restarts the stream, so every iterator sees the same batches.
    """

    def __init__(
        self,
        cohort: LongitudinalCohort,
        dims: Sequence[int],
        batch_size: int,
        seed: int,
        max_degrees: float = MAX_ROTATION_DEGREES,
    ):
        subjects = _eligible_subjects(cohort)
        self.cohort = cohort
        self.dims = tuple(dims)
        self.batch_size = batch_size
        self.seed = seed
        self.max_degrees = max_degrees
        logging.info(
            f"Generate-stage pairs from {len(subjects)} subjects "
            f"at dims {self.dims}."
        )

    def samples(self) -> Iterator[Dict[str, np.ndarray]]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0]))
        while True:
            target, bundle = make_training_pair(
                self.cohort, rng, dims=self.dims, max_degrees=self.max_degrees
            )
            yield {
                "x0": target.voxels[..., np.newaxis],
                "guide": bundle.guide_volume.voxels[..., np.newaxis],
                "age": np.float32(bundle.target_age_months),
            }

    def get_ds(self) -> tf.data.Dataset:
        volume = tf.TensorSpec(shape=(*self.dims, 1), dtype=tf.float32)
        ds = tf.data.Dataset.from_generator(
            self.samples,
            output_signature={
                "x0": volume,
                "guide": volume,
                "age": tf.TensorSpec(shape=(), dtype=tf.float32),
            },
        )
        ds = ds.batch(self.batch_size, drop_remainder=True)
        ds = ds.prefetch(tf.data.experimental.AUTOTUNE)
        return ds

    def __iter__(self):
        return iter(self.get_ds())


def make_sr_pair(v: Volume3D, low_dims: Sequence[int]) -> Tuple[Volume3D, Volume3D]:
    """High-resolution target at ``2 * low_dims`` and its downsampled condition."""
    x0 = crop_pad_to(v, tuple(2 * n for n in low_dims))
    return x0, resample_down2(x0)


class SrPairDataset:
    """
    Infinite stream of refine-stage batches, each a dictionary with

    * ``x0``: high-resolution targets (B, 2X, 2Y, 2Z, 1),
    * ``z``: low-resolution conditions (B, X, Y, Z, 1).

    Iterating restarts the stream, so every iterator sees the same batches.
    """

    def __init__(
        self,
        cohort: LongitudinalCohort,
        low_dims: Sequence[int],
        batch_size: int,
        seed: int,
    ):
        self.records = cohort.records()
        if not self.records:
            raise DataError("Cannot train on an empty cohort.")
        self.low_dims = tuple(low_dims)
        self.batch_size = batch_size
        self.seed = seed

    def samples(self) -> Iterator[Dict[str, np.ndarray]]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0]))
        while True:
            idx = rng.integers(len(self.records))
            high, low = make_sr_pair(self.records[idx].volume, self.low_dims)
            yield {"x0": high.voxels[..., np.newaxis], "z": low.voxels[..., np.newaxis]}

    def get_ds(self) -> tf.data.Dataset:
        high_dims = tuple(2 * n for n in self.low_dims)
        ds = tf.data.Dataset.from_generator(
            self.samples,
            output_signature={
                "x0": tf.TensorSpec(shape=(*high_dims, 1), dtype=tf.float32),
                "z": tf.TensorSpec(shape=(*self.low_dims, 1), dtype=tf.float32),
            },
        )
        ds = ds.batch(self.batch_size, drop_remainder=True)
        ds = ds.prefetch(tf.data.experimental.AUTOTUNE)
        return ds

    def __iter__(self):
        return iter(self.get_ds())
