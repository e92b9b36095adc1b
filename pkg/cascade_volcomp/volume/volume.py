"""
Value types for volumetric scans and longitudinal cohorts.

Voxels are held as ``(nx, ny, nz)`` float32 arrays indexed ``[x, y, z]``. The canonical
serialization is x-fastest, i.e., Fortran order of that array.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..errors import DataError

__all__ = [
    "LongitudinalCohort",
    "MAX_AGE_MONTHS",
    "Provenance",
    "ScanRecord",
    "Volume3D",
]

# Cohorts in this package cover infancy only
MAX_AGE_MONTHS = 30.0


def _as_spacing(spacing) -> Tuple[float, float, float]:
    if np.ndim(spacing) == 0:
        spacing = (spacing,) * 3
    if len(spacing) != 3:
        raise ValueError(f"Spacing needs three entries, got {spacing}.")
    # Spacings are stored as f32 on disk; rounding here keeps write/read exact.
    spacing = tuple(float(np.float32(s)) for s in spacing)
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"Spacing has to be positive and finite, got {spacing}.")
    return spacing


@dataclass(frozen=True, eq=False)
class Volume3D:
    """
    A 3D scalar field with voxel spacing.

    Parameters:
        voxels: Array of shape ``(nx, ny, nz)``. Converted to read-only float32.
        spacing: Voxel size in mm, either a scalar or ``(sx, sy, sz)``.
    """

    voxels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        voxels = np.array(self.voxels, dtype=np.float32, copy=True)
        if voxels.ndim != 3:
            raise ValueError(f"Volume needs 3 dimensions, got shape {voxels.shape}.")
        if min(voxels.shape) <= 0:
            raise ValueError(f"Volume dims have to be positive, got {voxels.shape}.")
        if not np.all(np.isfinite(voxels)):
            raise ValueError("Volume contains non-finite intensities.")
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @classmethod
    def zeros(cls, dims, spacing=(1.0, 1.0, 1.0)) -> "Volume3D":
        return cls(np.zeros(tuple(dims), dtype=np.float32), spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    @property
    def nb_voxels(self) -> int:
        return int(self.voxels.size)

    @property
    def voxel_volume(self) -> float:
        """Volume of a single voxel in mm^3."""
        return float(np.prod(self.spacing))

    def with_voxels(self, voxels: np.ndarray, spacing=None) -> "Volume3D":
        """Returns a new volume with the given voxels and, by default, same spacing."""
        return Volume3D(voxels, self.spacing if spacing is None else spacing)

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(
            self.voxels, other.voxels
        )

    def __repr__(self):
        return f"Volume3D(dims={self.dims}, spacing={self.spacing})"


class Provenance(str, enum.Enum):
    OBSERVED = "observed"
    GENERATED = "generated"


@dataclass(frozen=True)
class ScanRecord:
    """A scan of one subject at one age."""

    subject_id: str
    age_months: float
    volume: Volume3D
    provenance: Provenance = Provenance.OBSERVED

    def __post_init__(self):
        if not self.subject_id:
            raise ValueError("Subject id must be a non-empty string.")
        age = float(self.age_months)
        if not 0.0 < age <= MAX_AGE_MONTHS:
            raise ValueError(
                f"Age has to be in (0, {MAX_AGE_MONTHS}] months, got {age}."
            )
        object.__setattr__(self, "age_months", age)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def scan_id(self) -> str:
        return f"{self.subject_id}_{self.age_months:g}mo"

    @property
    def key(self) -> Tuple[str, float]:
        return self.subject_id, self.age_months


@dataclass(frozen=True)
class LongitudinalCohort:
    """
    Scans grouped per subject, ordered by ascending age.

    Parameters:
        subjects: Map subject_id -> scans of that subject with strictly increasing ages.
        age_grid: Optional canonical target ages.
    """

    subjects: Dict[str, Tuple[ScanRecord, ...]]
    age_grid: Optional[Tuple[float, ...]] = None
    _index: Dict[Tuple[str, float], ScanRecord] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        subjects = {}
        index = {}
        for subject_id, scans in self.subjects.items():
            scans = tuple(scans)
            for scan in scans:
                if scan.subject_id != subject_id:
                    raise DataError(
                        f"Scan of subject {scan.subject_id} filed under {subject_id}."
                    )
                if scan.key in index:
                    raise DataError(f"Duplicate scan {scan.scan_id}.")
                index[scan.key] = scan
            ages = [scan.age_months for scan in scans]
            if any(a >= b for a, b in zip(ages[:-1], ages[1:])):
                raise DataError(
                    f"Ages of subject {subject_id} are not strictly increasing: {ages}."
                )
            subjects[subject_id] = scans
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "_index", index)
        if self.age_grid is not None:
            object.__setattr__(self, "age_grid", tuple(float(a) for a in self.age_grid))

    @classmethod
    def from_records(
        cls, records: Iterable[ScanRecord], age_grid=None, subject_ids=()
    ) -> "LongitudinalCohort":
        """
        Groups records by subject and sorts them by age. Subjects listed in
        ``subject_ids`` are kept even if they have no records.
        """
        subjects = {subject_id: [] for subject_id in subject_ids}
        for record in records:
            subjects.setdefault(record.subject_id, []).append(record)
        subjects = {
            subject_id: sorted(scans, key=lambda s: s.age_months)
            for subject_id, scans in subjects.items()
        }
        return cls(subjects=subjects, age_grid=age_grid)

    @property
    def subject_ids(self) -> List[str]:
        return list(self.subjects.keys())

    @property
    def count(self) -> int:
        return len(self._index)

    def records(self) -> List[ScanRecord]:
        """All scans, subject by subject, in ascending age."""
        return [scan for scans in self.subjects.values() for scan in scans]

    def scans_of(self, subject_id: str) -> Tuple[ScanRecord, ...]:
        if subject_id not in self.subjects:
            raise DataError(f"Unknown subject {subject_id}.")
        return self.subjects[subject_id]

    def scan_at(self, subject_id: str, age_months: float) -> ScanRecord:
        key = (subject_id, float(age_months))
        if key not in self._index:
            raise DataError(f"No scan of {subject_id} at {age_months} months.")
        return self._index[key]

    def has_scan(self, subject_id: str, age_months: float) -> bool:
        return (subject_id, float(age_months)) in self._index

    def nearest_scan(self, subject_id: str, age_months: float) -> ScanRecord:
        """Scan closest in age; ties go to the younger scan."""
        scans = self.scans_of(subject_id)
        if not scans:
            raise DataError(f"Subject {subject_id} has no scans.")
        # Scans are sorted by age, so `min` returns the younger one on ties.
        return min(scans, key=lambda s: abs(s.age_months - age_months))

    def with_records(self, records: Iterable[ScanRecord]) -> "LongitudinalCohort":
        """
        Returns a cohort with ``records`` inserted. A record at an age where the
        cohort already holds a scan is skipped, i.e., observed scans are never
        overwritten.
        """
        merged = dict(self._index)
        for record in records:
            if record.key in merged:
                logging.warning(
                    f"Scan {record.scan_id} already present, skipping insertion."
                )
                continue
            merged[record.key] = record
        return LongitudinalCohort.from_records(
            merged.values(), age_grid=self.age_grid, subject_ids=self.subject_ids
        )

    def without(self, records: Iterable[ScanRecord]) -> "LongitudinalCohort":
        """Returns a cohort with the given scans removed. Subjects are kept."""
        keys = {record.key for record in records}
        remaining = [scan for key, scan in self._index.items() if key not in keys]
        return LongitudinalCohort.from_records(
            remaining, age_grid=self.age_grid, subject_ids=self.subject_ids
        )
