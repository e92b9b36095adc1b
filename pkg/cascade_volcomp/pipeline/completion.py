"""
Completion of missing time points with the two-stage cascade.

For every requested age a guidance scan of the subject is selected, the generate stage
samples a low-resolution volume conditioned on the guidance scan and the target age,
and the refine stage samples the high-resolution volume conditioned on that result.
"""
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..architectures import (
    AsmmUNet,
    GuidanceBundle,
    SrUNet,
    denoise_forward,
    sr_denoise_forward,
)
from ..diffusion import NoiseSchedule, ddim_sample, ddpm_sample, make_linear_schedule
from ..errors import ConfigError, DataError, FormatError
from ..models import load_checkpoint
from ..volume import (
    LongitudinalCohort,
    Provenance,
    ScanRecord,
    Volume3D,
    normalize_intensity,
    prepare_volume,
    upsample_trilinear,
)

__all__ = [
    "CascadeStage",
    "CompletionRequest",
    "GuidancePolicy",
    "SamplingConfig",
    "complete_cohort",
    "complete_subject",
    "generate_low_res",
    "load_stage",
    "missing_ages",
    "normalize_completion",
    "refine",
    "select_guidance",
]

SAMPLERS = ("ddim", "ddpm")
NORMALIZATIONS = ("minmax", "clip")


@dataclass
class SamplingConfig:
    """
    Configuration of the reverse process used at completion time.

    Attributes:
        sampler: ``"ddim"`` or ``"ddpm"``. DDPM always runs all T steps.
        steps: Number of DDIM steps.
        eta: DDIM stochasticity, 0 is deterministic.
        normalization: ``"minmax"`` maps each completed scan to [0, 1], ``"clip"``
            clips values to [0, 1].
        progress: Show progress bars.
    """

    sampler: str = "ddim"
    steps: int = 50
    eta: float = 0.0
    normalization: str = "minmax"
    progress: bool = False

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"Unknown sampler {self.sampler}, expected {SAMPLERS}.")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"Unknown normalization {self.normalization}, "
                f"expected {NORMALIZATIONS}."
            )
        if self.steps < 1:
            raise ConfigError(f"steps has to be positive, got {self.steps}.")
        if self.eta < 0:
            raise ConfigError(f"eta has to be non-negative, got {self.eta}.")


class GuidancePolicy(str, enum.Enum):
    NEAREST_AGE = "nearest_age"
    FIXED_SCAN = "fixed_scan"


@dataclass(frozen=True)
class CompletionRequest:
    """
    Ages to complete for one subject.

    Parameters:
        subject_id: Subject in the cohort.
        target_ages: Ages in months for which scans are generated.
        policy: How the guidance scan is chosen. ``nearest_age`` takes the observed
            scan closest to each target age, ties going to the younger scan.
            ``fixed_scan`` always uses the scan at ``guide_age``.
        guide_age: Age of the guidance scan for the ``fixed_scan`` policy.
    """

    subject_id: str
    target_ages: Tuple[float, ...] = field(default_factory=tuple)
    policy: GuidancePolicy = GuidancePolicy.NEAREST_AGE
    guide_age: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(
            self, "target_ages", tuple(float(a) for a in self.target_ages)
        )
        object.__setattr__(self, "policy", GuidancePolicy(self.policy))
        if self.policy == GuidancePolicy.FIXED_SCAN and self.guide_age is None:
            raise ConfigError("The fixed_scan policy needs a guide_age.")


# A stage denoiser is either a network or a function. Generate-stage functions have
# the signature fn(x_t, t, guidance), refine-stage functions fn(x_t, t, z0).
Denoiser = Union[AsmmUNet, SrUNet, Callable]


@dataclass
class CascadeStage:
    """
    One stage of the cascade: the denoiser, the schedule it was trained with and the
    dims of the volumes it produces.
    """

    denoiser: Denoiser
    schedule: NoiseSchedule
    dims: Tuple[int, int, int]

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)

    @classmethod
    def from_model(cls, model, schedule: NoiseSchedule) -> "CascadeStage":
        if isinstance(model, AsmmUNet):
            dims = model.cfg.in_dims
        elif isinstance(model, SrUNet):
            dims = model.cfg.high_dims
        else:
            raise TypeError(f"Cannot infer dims of {type(model).__name__}.")
        return cls(denoiser=model, schedule=schedule, dims=dims)


def load_stage(path: Union[str, Path]) -> CascadeStage:
    """Loads a stage from a checkpoint written by the trainer."""
    model, header = load_checkpoint(path)
    schedule = header.get("extra", {}).get("schedule")
    if schedule is None:
        raise FormatError(f"{path}: checkpoint does not store a noise schedule.")
    schedule = make_linear_schedule(
        schedule["beta_start"], schedule["beta_end"], schedule["timesteps"]
    )
    return CascadeStage.from_model(model, schedule)


def _as_stage(stage) -> CascadeStage:
    if isinstance(stage, CascadeStage):
        return stage
    return load_stage(stage)


def select_guidance(
    cohort: LongitudinalCohort, request: CompletionRequest, age_months: float
) -> ScanRecord:
    """Guidance scan for ``age_months`` according to the request's policy."""
    if request.policy == GuidancePolicy.FIXED_SCAN:
        return cohort.scan_at(request.subject_id, request.guide_age)
    observed = [
        scan
        for scan in cohort.scans_of(request.subject_id)
        if scan.provenance == Provenance.OBSERVED
    ]
    if not observed:
        raise DataError(f"Subject {request.subject_id} has no observed scans.")
    # Scans are sorted by age, so `min` returns the younger one on ties.
    return min(observed, key=lambda s: abs(s.age_months - age_months))


def _sample(fn, dims, schedule: NoiseSchedule, sampling: SamplingConfig, seed: int):
    if sampling.sampler == "ddpm":
        return ddpm_sample(fn, dims, schedule, seed=seed, progress=sampling.progress)
    return ddim_sample(
        fn,
        dims,
        schedule,
        steps=min(sampling.steps, schedule.T),
        seed=seed,
        eta=sampling.eta,
        progress=sampling.progress,
    )


def generate_low_res(
    gen: CascadeStage,
    guidance: GuidanceBundle,
    sampling: Optional[SamplingConfig] = None,
    seed: int = 0,
) -> np.ndarray:
    """Runs the generate stage and returns a float64 array at ``gen.dims``."""
    sampling = sampling or SamplingConfig()
    if guidance.guide_volume.dims != gen.dims:
        raise FormatError(
            f"Guidance volume has dims {guidance.guide_volume.dims}, generate stage "
            f"works at {gen.dims}."
        )
    if isinstance(gen.denoiser, AsmmUNet):
        model = gen.denoiser

        def fn(x_t, t):
            return denoise_forward(model, x_t, t, guidance)

    else:

        def fn(x_t, t):
            return gen.denoiser(x_t, t, guidance)

    return _sample(fn, gen.dims, gen.schedule, sampling, seed)


def refine(
    sr: Optional[CascadeStage],
    z0: Volume3D,
    sampling: Optional[SamplingConfig] = None,
    seed: int = 0,
) -> Volume3D:
    """
    Runs the refine stage on the low-resolution ``z0``. Without a refine stage, ``z0``
    is upsampled trilinearly.
    """
    sampling = sampling or SamplingConfig()
    if sr is None:
        return upsample_trilinear(z0)

    high_dims = tuple(2 * n for n in z0.dims)
    if high_dims != sr.dims:
        raise FormatError(
            f"Refine stage produces dims {sr.dims}, but the low-resolution volume "
            f"{z0.dims} needs {high_dims}."
        )
    z = z0.voxels.astype(np.float64)
    if isinstance(sr.denoiser, SrUNet):
        model = sr.denoiser

        def fn(x_t, t):
            return sr_denoise_forward(model, x_t, t, z)

    else:

        def fn(x_t, t):
            return sr.denoiser(x_t, t, z)

    x = _sample(fn, high_dims, sr.schedule, sampling, seed)
    return Volume3D(x, tuple(s / 2 for s in z0.spacing))


def normalize_completion(v: Volume3D, normalization: str) -> Volume3D:
    """Maps a sampled volume to [0, 1] as configured by ``normalization``."""
    if normalization == "minmax":
        try:
            return normalize_intensity(v)
        except ValueError:
            logging.warning("Completed volume is constant, clipping instead.")
    return v.with_voxels(np.clip(v.voxels, 0.0, 1.0))


def complete_subject(
    gen,
    sr,
    cohort: LongitudinalCohort,
    request: CompletionRequest,
    seed: int = 0,
    sampling: Optional[SamplingConfig] = None,
) -> List[ScanRecord]:
    """
    Generates the scans of one subject at the requested ages.

    Args:
        gen: Generate stage as :class:`CascadeStage` or checkpoint path.
        sr: Refine stage as :class:`CascadeStage` or checkpoint path. ``None``
            upsamples the low-resolution result trilinearly instead.
        cohort: Cohort holding the subject's scans.
        request: Subject, target ages and guidance policy.
        seed: Base seed. The k-th target age uses its own stream derived from
            ``(seed, k)``, so results do not depend on which other ages are requested
            before it.
        sampling: Reverse process configuration.

    Returns:
        One generated :class:`ScanRecord` per target age, in request order.
    """
    sampling = sampling or SamplingConfig()
    gen = _as_stage(gen)
    sr = _as_stage(sr) if sr is not None else None
    high_dims = tuple(2 * n for n in gen.dims)
    if sr is not None and sr.dims != high_dims:
        raise FormatError(
            f"Generate stage produces {gen.dims}, refine stage expects "
            f"{tuple(n // 2 for n in sr.dims)}."
        )
    cohort.scans_of(request.subject_id)  # Fail early on unknown subjects

    records = []
    for k, age in enumerate(request.target_ages):
        guide_scan = select_guidance(cohort, request, age)
        guide_volume = prepare_volume(guide_scan.volume, gen.dims)
        guidance = GuidanceBundle(guide_volume, age)
        gen_seed, sr_seed = np.random.SeedSequence([seed, k]).generate_state(2)
        logging.info(
            f"Completing {request.subject_id} at {age:g} months, "
            f"guided by {guide_scan.scan_id}."
        )

        z0 = generate_low_res(gen, guidance, sampling, seed=int(gen_seed))
        z0 = Volume3D(z0, guide_volume.spacing)
        x0 = refine(sr, z0, sampling, seed=int(sr_seed))
        x0 = normalize_completion(x0, sampling.normalization)
        records.append(
            ScanRecord(
                subject_id=request.subject_id,
                age_months=age,
                volume=x0,
                provenance=Provenance.GENERATED,
            )
        )
    return records


def missing_ages(
    cohort: LongitudinalCohort, subject_id: str, ages: Sequence[float]
) -> Tuple[float, ...]:
    return tuple(a for a in ages if not cohort.has_scan(subject_id, a))


def complete_cohort(
    gen,
    sr,
    cohort: LongitudinalCohort,
    seed: int = 0,
    sampling: Optional[SamplingConfig] = None,
    ages: Optional[Sequence[float]] = None,
) -> List[ScanRecord]:
    """
    Completes every subject at all ages of ``ages`` (default: the cohort's age grid)
    where it has no scan. The i-th subject uses seed stream ``(seed, i)``.
    """
    ages = ages if ages is not None else cohort.age_grid
    if ages is None:
        raise DataError("Cohort has no age grid, pass the ages to complete.")
    gen = _as_stage(gen)
    sr = _as_stage(sr) if sr is not None else None

    records = []
    for i, subject_id in enumerate(cohort.subject_ids):
        targets = missing_ages(cohort, subject_id, ages)
        if not targets:
            continue
        request = CompletionRequest(subject_id=subject_id, target_ages=targets)
        subject_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        records.extend(
            complete_subject(
                gen, sr, cohort, request, seed=subject_seed, sampling=sampling
            )
        )
    return records
