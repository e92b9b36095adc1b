"""
File I/O for volumes, scans and cohorts.

VOL3 layout, all little-endian:

* bytes 0-3: magic ``b"VOL3"``
* bytes 4-7: format version, u32, currently 1
* bytes 8-19: dims ``(nx, ny, nz)``, 3 x u32
* bytes 20-31: spacing in mm, 3 x f32
* bytes 32-: ``nx * ny * nz`` voxels, f32, x-fastest

A scan is a VOL3 file plus a JSON sidecar ``<name>.meta.json``. A cohort is a directory
of scans with a ``cohort.json`` manifest.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from ..errors import FormatError
from .volume import LongitudinalCohort, Provenance, ScanRecord, Volume3D

__all__ = [
    "CohortBundle",
    "MANIFEST_NAME",
    "read_cohort",
    "read_scan",
    "read_volume",
    "write_cohort",
    "write_scan",
    "write_volume",
]

MAGIC = b"VOL3"
FORMAT_VERSION = 1
MANIFEST_NAME = "cohort.json"
MANIFEST_VERSION = 1

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("dims", "<u4", (3,)),
        ("spacing", "<f4", (3,)),
    ]
)
VOXEL_DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


def write_volume(v: Volume3D, path: PathLike):
    """Writes ``v`` in VOL3 format. Parent directories are created."""
    if not isinstance(v, Volume3D):
        raise TypeError(f"Expected Volume3D, got {type(v)}.")
    # Volume3D validates on construction; we check again, since the array is only
    # protected by a write flag.
    if not np.all(np.isfinite(v.voxels)):
        raise ValueError("Refusing to write volume with non-finite intensities.")

    header = np.zeros((), dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["dims"] = v.dims
    header["spacing"] = v.spacing
    payload = np.asarray(v.voxels, dtype=VOXEL_DTYPE).ravel(order="F")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(payload.tobytes())


def read_volume(path: PathLike) -> Volume3D:
    """Reads a VOL3 file written by :func:`write_volume`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Volume file {path} does not exist.")
    data = path.read_bytes()

    if len(data) < HEADER_DTYPE.itemsize:
        raise FormatError(f"{path}: file too short for VOL3 header.")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if header["magic"] != MAGIC:
        raise FormatError(f"{path}: bad magic {header['magic']!r}, expected {MAGIC!r}.")
    if header["version"] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported VOL3 version {header['version']}.")

    dims = tuple(int(n) for n in header["dims"])
    if min(dims) == 0:
        raise FormatError(f"{path}: dims have to be positive, got {dims}.")
    payload = data[HEADER_DTYPE.itemsize :]
    expected = int(np.prod(dims)) * VOXEL_DTYPE.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected} for "
            f"dims {dims}."
        )

    voxels = np.frombuffer(payload, dtype=VOXEL_DTYPE).reshape(dims, order="F")
    if not np.all(np.isfinite(voxels)):
        raise FormatError(f"{path}: volume contains non-finite values.")
    spacing = tuple(float(s) for s in header["spacing"])
    try:
        return Volume3D(voxels, spacing)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def write_scan(record: ScanRecord, directory: PathLike) -> Path:
    """Writes the scan volume and its sidecar. Returns the path of the volume."""
    path = Path(directory) / f"{record.scan_id}.vol3"
    write_volume(record.volume, path)
    meta = {
        "subject_id": record.subject_id,
        "age_months": record.age_months,
        "provenance": record.provenance.value,
    }
    _sidecar_path(path).write_text(json.dumps(meta, indent=2))
    return path


def read_scan(path: PathLike) -> ScanRecord:
    """Reads a scan written by :func:`write_scan`."""
    path = Path(path)
    volume = read_volume(path)
    sidecar = _sidecar_path(path)
    if not sidecar.is_file():
        raise FileNotFoundError(f"Sidecar {sidecar} does not exist.")
    try:
        meta = json.loads(sidecar.read_text())
        return ScanRecord(
            subject_id=str(meta["subject_id"]),
            age_months=float(meta["age_months"]),
            volume=volume,
            provenance=Provenance(meta.get("provenance", "observed")),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{sidecar}: invalid sidecar ({e}).") from e


@dataclass
class CohortBundle:
    """
    Everything stored in a cohort directory.

    Parameters:
        cohort: Scans available for training and guidance.
        held_out: Scans masked out of ``cohort``; used as ground truth for evaluation.
        ground_truth: Per-scan tissue volumes in mm^3, keyed by ``(subject_id, age)``.
        metadata: Free-form generator information.
    """

    cohort: LongitudinalCohort
    held_out: List[ScanRecord] = field(default_factory=list)
    ground_truth: Dict[Tuple[str, float], Dict[str, float]] = field(
        default_factory=dict
    )
    metadata: dict = field(default_factory=dict)


def write_cohort(
    directory: PathLike,
    cohort: LongitudinalCohort,
    held_out: Iterable[ScanRecord] = (),
    ground_truth: Optional[Dict[Tuple[str, float], Dict[str, float]]] = None,
    metadata: Optional[dict] = None,
) -> Path:
    """Writes all scans (available and held-out) and the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ground_truth = ground_truth or {}

    entries = []
    flagged = [(scan, False) for scan in cohort.records()]
    flagged += [(scan, True) for scan in held_out]
    for scan, is_held_out in flagged:
        path = write_scan(scan, directory)
        entry = {
            "subject_id": scan.subject_id,
            "age_months": scan.age_months,
            "file": path.name,
            "held_out": is_held_out,
            "provenance": scan.provenance.value,
        }
        if scan.key in ground_truth:
            entry["volumes"] = {k: float(v) for k, v in ground_truth[scan.key].items()}
        entries.append(entry)

    manifest = {
        "version": MANIFEST_VERSION,
        "subjects": cohort.subject_ids,
        "age_grid": list(cohort.age_grid) if cohort.age_grid is not None else None,
        "scans": entries,
        "metadata": metadata or {},
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2))
    logging.info(f"Wrote {len(entries)} scans to {directory}.")
    return path


def read_cohort(directory: PathLike) -> CohortBundle:
    """Reads a cohort directory written by :func:`write_cohort`."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"Manifest {manifest_path} does not exist.")
    try:
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["scans"]
        subject_ids = manifest.get("subjects", [])
        age_grid = manifest.get("age_grid")
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{manifest_path}: invalid manifest ({e}).") from e

    available, held_out, ground_truth = [], [], {}
    for entry in entries:
        scan = read_scan(directory / entry["file"])
        if (scan.subject_id, scan.age_months) != (
            entry["subject_id"],
            float(entry["age_months"]),
        ):
            raise FormatError(f"{entry['file']}: sidecar disagrees with manifest.")
        (held_out if entry.get("held_out", False) else available).append(scan)
        if "volumes" in entry:
            ground_truth[scan.key] = dict(entry["volumes"])

    cohort = LongitudinalCohort.from_records(
        available, age_grid=age_grid, subject_ids=subject_ids
    )
    return CohortBundle(
        cohort=cohort,
        held_out=held_out,
        ground_truth=ground_truth,
        metadata=manifest.get("metadata", {}),
    )
