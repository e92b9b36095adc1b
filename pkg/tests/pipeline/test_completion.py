import numpy as np
import pytest

from cascade_volcomp import create_model
from cascade_volcomp.diffusion import make_linear_schedule, oracle_denoiser
from cascade_volcomp.errors import ConfigError, DataError, FormatError
from cascade_volcomp.pipeline import (
    CascadeStage,
    CompletionRequest,
    GuidancePolicy,
    SamplingConfig,
    complete_cohort,
    complete_subject,
    missing_ages,
    refine,
    select_guidance,
)
from cascade_volcomp.volume import (
    LongitudinalCohort,
    Provenance,
    ScanRecord,
    Volume3D,
    normalize_intensity,
    resample_down2,
    upsample_trilinear,
)

from ..helpers import random_cohort

GEN_SCHEDULE = make_linear_schedule(1e-4, 5e-3, 100)
SR_SCHEDULE = make_linear_schedule(1e-4, 2e-2, 100)


def _zero_denoiser(x_t, t, cond):
    return np.zeros_like(x_t)


def _zero_stages(sr=True):
    gen = CascadeStage(_zero_denoiser, GEN_SCHEDULE, (8, 8, 8))
    sr = CascadeStage(_zero_denoiser, SR_SCHEDULE, (16, 16, 16)) if sr else None
    return gen, sr


@pytest.fixture
def masked():
    """Cohort without the 12 month scan of the first subject, and that scan."""
    cohort = random_cohort()
    held_out = cohort.scan_at("sub-000", 12.0)
    return cohort.without([held_out]), held_out


@pytest.mark.parametrize("normalization", ["minmax", "clip"])
def test_oracle_completion(normalization, masked):
    """With denoisers that know the answer, the cascade reproduces the held out scan."""
    cohort, held_out = masked
    truth_high = held_out.volume.voxels.astype(np.float64)
    truth_low = resample_down2(held_out.volume).voxels.astype(np.float64)
    gen_oracle = oracle_denoiser(truth_low, GEN_SCHEDULE)
    sr_oracle = oracle_denoiser(truth_high, SR_SCHEDULE)
    seen = {}

    def gen_fn(x_t, t, guidance):
        seen["target_age"] = guidance.target_age_months
        return gen_oracle(x_t, t)

    def sr_fn(x_t, t, z0):
        seen["z0"] = z0
        return sr_oracle(x_t, t)

    gen = CascadeStage(gen_fn, GEN_SCHEDULE, (8, 8, 8))
    sr = CascadeStage(sr_fn, SR_SCHEDULE, (16, 16, 16))
    request = CompletionRequest("sub-000", target_ages=(12.0,))
    sampling = SamplingConfig(steps=10, normalization=normalization)
    (record,) = complete_subject(gen, sr, cohort, request, seed=0, sampling=sampling)

    assert record.key == held_out.key
    assert record.provenance == Provenance.GENERATED
    assert record.volume.dims == (16, 16, 16)
    assert record.volume.spacing == held_out.volume.spacing
    assert seen["target_age"] == 12.0
    assert np.max(np.abs(seen["z0"] - truth_low)) < 1e-5

    if normalization == "minmax":
        expected = normalize_intensity(held_out.volume).voxels
    else:
        expected = held_out.volume.voxels
    assert np.max(np.abs(record.volume.voxels - expected)) < 1e-4


def test_empty_request(masked):
    cohort, _ = masked
    gen, sr = _zero_stages()
    assert complete_subject(gen, sr, cohort, CompletionRequest("sub-000")) == []


def test_request_validation():
    request = CompletionRequest(
        "sub-000", target_ages=[6, 12], policy="fixed_scan", guide_age=6
    )
    assert request.target_ages == (6.0, 12.0)
    assert request.policy == GuidancePolicy.FIXED_SCAN
    with pytest.raises(ConfigError):
        CompletionRequest("sub-000", policy=GuidancePolicy.FIXED_SCAN)
    with pytest.raises(ValueError):
        CompletionRequest("sub-000", policy="random")
    with pytest.raises(ConfigError):
        SamplingConfig(sampler="euler")
    with pytest.raises(ConfigError):
        SamplingConfig(normalization="zscore")
    with pytest.raises(ConfigError):
        SamplingConfig(steps=0)


def test_select_guidance():
    cohort = random_cohort(nb_subjects=1, ages=(6.0, 18.0, 24.0))
    nearest = CompletionRequest("sub-000")
    # Equidistant scans: the younger one wins
    assert select_guidance(cohort, nearest, 12.0).age_months == 6.0
    assert select_guidance(cohort, nearest, 13.0).age_months == 18.0
    assert select_guidance(cohort, nearest, 30.0).age_months == 24.0

    fixed = CompletionRequest("sub-000", policy="fixed_scan", guide_age=24.0)
    assert select_guidance(cohort, fixed, 6.0).age_months == 24.0
    fixed = CompletionRequest("sub-000", policy="fixed_scan", guide_age=12.0)
    with pytest.raises(DataError):
        select_guidance(cohort, fixed, 6.0)

    # Generated scans never serve as guidance
    generated = ScanRecord(
        "sub-000",
        12.0,
        cohort.scan_at("sub-000", 6.0).volume,
        provenance=Provenance.GENERATED,
    )
    cohort = cohort.with_records([generated])
    assert select_guidance(cohort, nearest, 12.0).age_months == 6.0

    empty = LongitudinalCohort.from_records([generated])
    with pytest.raises(DataError):
        select_guidance(empty, nearest, 12.0)


def test_completion_errors(masked):
    cohort, _ = masked
    gen, sr = _zero_stages()
    request = CompletionRequest("sub-000", target_ages=(12.0,))

    bad_sr = CascadeStage(_zero_denoiser, SR_SCHEDULE, (8, 8, 8))
    with pytest.raises(FormatError):
        complete_subject(gen, bad_sr, cohort, request)
    with pytest.raises(DataError):
        complete_subject(gen, sr, cohort, CompletionRequest("sub-999", (12.0,)))
    with pytest.raises(FileNotFoundError):
        complete_subject("does_not_exist.vckp", None, cohort, request)

    z0 = Volume3D(np.zeros((4, 4, 4)))
    with pytest.raises(FormatError):
        refine(sr, z0)


def test_without_refine_stage(masked):
    cohort, _ = masked
    gen, _ = _zero_stages(sr=False)
    request = CompletionRequest("sub-000", target_ages=(12.0,))
    sampling = SamplingConfig(steps=5, normalization="clip")
    (record,) = complete_subject(gen, None, cohort, request, seed=3, sampling=sampling)
    assert record.volume.dims == (16, 16, 16)

    z0 = Volume3D(np.random.default_rng(0).uniform(size=(8, 8, 8)), 2.0)
    assert refine(None, z0) == upsample_trilinear(z0)


def test_seed_streams(masked):
    cohort, _ = masked
    gen, sr = _zero_stages()
    sampling = SamplingConfig(steps=3)

    def run(ages, seed=0):
        request = CompletionRequest("sub-000", target_ages=ages)
        return complete_subject(gen, sr, cohort, request, seed=seed, sampling=sampling)

    a = run((12.0,))
    b = run((12.0, 30.0))
    assert a[0].volume == b[0].volume
    assert run((12.0,))[0].volume == a[0].volume
    assert run((12.0,), seed=1)[0].volume != a[0].volume
    # The same age at a different position draws from a different stream
    assert run((30.0, 12.0))[1].volume != a[0].volume


def test_complete_cohort():
    cohort = random_cohort(nb_subjects=3)
    removed = [cohort.scan_at("sub-000", 12.0), cohort.scan_at("sub-002", 6.0)]
    cohort = cohort.without(removed)
    assert missing_ages(cohort, "sub-000", (6.0, 12.0, 18.0)) == (12.0,)
    assert missing_ages(cohort, "sub-001", (6.0, 12.0, 18.0)) == ()

    gen, sr = _zero_stages(sr=False)
    sampling = SamplingConfig(steps=2)
    records = complete_cohort(gen, sr, cohort, seed=0, sampling=sampling)
    assert [r.key for r in records] == [r.key for r in removed]
    assert all(r.provenance == Provenance.GENERATED for r in records)

    completed = cohort.with_records(records)
    assert completed.count == 9

    records = complete_cohort(gen, sr, cohort, sampling=sampling, ages=(24.0,))
    assert len(records) == 3

    no_grid = LongitudinalCohort.from_records(cohort.records())
    with pytest.raises(DataError):
        complete_cohort(gen, sr, no_grid)


@pytest.mark.timeout(300)
def test_complete_with_networks(masked):
    cohort, _ = masked
    gen_model = create_model("asmm_tiny")
    sr_model = create_model("sr_tiny", low_dims=(8, 8, 8))
    gen = CascadeStage.from_model(gen_model, make_linear_schedule(1e-4, 5e-3, 10))
    sr = CascadeStage.from_model(sr_model, make_linear_schedule(1e-4, 2e-2, 10))
    assert (gen.dims, sr.dims) == ((8, 8, 8), (16, 16, 16))

    request = CompletionRequest("sub-000", target_ages=(12.0,))
    sampling = SamplingConfig(steps=2)
    (a,) = complete_subject(gen, sr, cohort, request, seed=5, sampling=sampling)
    (b,) = complete_subject(gen, sr, cohort, request, seed=5, sampling=sampling)
    assert a.volume == b.volume
    assert a.volume.voxels.min() >= 0.0 and a.volume.voxels.max() <= 1.0

    with pytest.raises(TypeError):
        CascadeStage.from_model(object(), GEN_SCHEDULE)
