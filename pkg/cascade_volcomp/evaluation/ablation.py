"""
Comparison of cascade variants on held-out scans.

Each variant is a pair ``(generate stage, refine stage)``; a refine stage of ``None``
upsamples the generate-stage output trilinearly. The variants compared by default are

* ``copy``: the subject's observed scan nearest in age, no network involved,
* ``model_1``: shared encoder, guidance as second input channel, with refinement,
* ``model_2``: independent guidance encoder, without refinement,
* ``full``: independent guidance encoder with refinement.

:func:`refine_vs_trilinear` scores the refine stage on its own against trilinear
upsampling of the same low-resolution volumes.
"""
import logging
import math
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import FormatError
from ..pipeline import (
    CascadeStage,
    CompletionRequest,
    SamplingConfig,
    complete_subject,
    load_stage,
    normalize_completion,
    refine,
    select_guidance,
)
from ..volume import (
    LongitudinalCohort,
    Provenance,
    ScanRecord,
    crop_pad_to,
    resample_down2,
    upsample_trilinear,
)
from .metrics import SsimParams, psnr, ssim3d

__all__ = [
    "COPY_VARIANT",
    "REFERENCE_SCORES",
    "ablation_report",
    "copy_baseline",
    "refine_vs_trilinear",
    "score_completions",
    "summarize_scores",
]

COPY_VARIANT = "copy"

# Scores (PSNR in dB, SSIM) reported for the full-scale cohort. They are shown next to
# desk-scale results for context only. The copy baseline has no published score.
REFERENCE_SCORES = {
    "cgan": (17.76, 0.72),
    COPY_VARIANT: (math.nan, math.nan),
    "model_1": (22.33, 0.73),
    "model_2": (23.22, 0.78),
    "full": (24.15, 0.81),
}

SCORE_COLUMNS = ["scan_id", "variant", "psnr_db", "ssim"]


def score_completions(
    variant: str,
    completed: Sequence[ScanRecord],
    truth: Sequence[ScanRecord],
    ssim_params: Optional[SsimParams] = None,
) -> pd.DataFrame:
    """
    Scores completed scans against the ground truth at the same (subject, age).

    Returns:
        Table with columns ``scan_id``, ``variant``, ``psnr_db`` and ``ssim``.
    """
    ssim_params = ssim_params or SsimParams()
    truth = {record.key: record for record in truth}
    rows = []
    for record in completed:
        if record.key not in truth:
            raise ValueError(f"No ground truth for {record.scan_id}.")
        reference = truth[record.key]
        if reference.volume.dims != record.volume.dims:
            raise FormatError(
                f"Completion of {record.scan_id} has dims {record.volume.dims}, "
                f"ground truth has {reference.volume.dims}."
            )
        rows.append(
            {
                "scan_id": record.scan_id,
                "variant": variant,
                "psnr_db": psnr(
                    reference.volume, record.volume, ssim_params.data_range
                ),
                "ssim": ssim3d(reference.volume, record.volume, ssim_params),
            }
        )
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def _std(values) -> float:
    # Identical volumes score PSNR +inf. A spread involving infinite values is
    # infinite itself, unless all values agree.
    values = np.asarray(values, dtype=np.float64)
    if np.all(values == values[0]):
        return 0.0
    if not np.all(np.isfinite(values)):
        return math.inf
    return float(np.std(values))


def summarize_scores(scores: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard deviation of PSNR and SSIM per variant, with reference scores
    as context columns. Variants keep the order of their first appearance.
    """
    rows = []
    for variant in pd.unique(scores["variant"]):
        part = scores[scores["variant"] == variant]
        reference = REFERENCE_SCORES.get(variant, (np.nan, np.nan))
        rows.append(
            {
                "variant": variant,
                "n_scans": len(part),
                "psnr_mean": float(np.mean(part["psnr_db"])),
                "psnr_std": _std(part["psnr_db"]),
                "ssim_mean": float(np.mean(part["ssim"])),
                "ssim_std": _std(part["ssim"]),
                "reference_psnr": reference[0],
                "reference_ssim": reference[1],
            }
        )
    return pd.DataFrame(rows)


def copy_baseline(
    held_out: Sequence[ScanRecord], cohort: LongitudinalCohort
) -> List[ScanRecord]:
    """
    Completes every held-out scan by copying the subject's observed scan nearest in
    age (ties going to the younger scan), cropped or padded to the held-out grid.
    """
    records = []
    for record in held_out:
        request = CompletionRequest(record.subject_id, (record.age_months,))
        guide = select_guidance(cohort, request, record.age_months)
        records.append(
            ScanRecord(
                subject_id=record.subject_id,
                age_months=record.age_months,
                volume=crop_pad_to(guide.volume, record.volume.dims),
                provenance=Provenance.GENERATED,
            )
        )
    return records


def ablation_report(
    variants: Mapping[str, Tuple[object, object]],
    held_out: Sequence[ScanRecord],
    cohort: LongitudinalCohort,
    seed: int = 0,
    sampling: Optional[SamplingConfig] = None,
    ssim_params: Optional[SsimParams] = None,
    include_copy: bool = True,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Completes every held-out scan with every variant and scores the results.

    Args:
        variants: Map from variant name to ``(gen, sr)``, each a
            :class:`CascadeStage` or a checkpoint path; ``sr`` may be ``None``.
        held_out: Ground-truth scans missing from ``cohort``.
        cohort: Scans available for guidance.
        seed: Base seed. The i-th held-out scan uses the same seed for every variant,
            so identical variants produce identical scores.
        sampling: Reverse process configuration.
        ssim_params: SSIM parameters, ``data_range`` is also used for PSNR.
        include_copy: Score the nearest-age copy baseline as first variant ``copy``.

    Returns:
        Tuple ``(summary, scores)`` with one summary row per variant and one score row
        per variant and held-out scan.
    """
    if include_copy and COPY_VARIANT in variants:
        raise ValueError(f"Variant name `{COPY_VARIANT}` is reserved for the baseline.")

    all_scores = []
    if include_copy and held_out:
        scores = score_completions(
            COPY_VARIANT, copy_baseline(held_out, cohort), held_out, ssim_params
        )
        all_scores.append(scores)

    for name, (gen, sr) in variants.items():
        gen = gen if isinstance(gen, CascadeStage) else load_stage(gen)
        if sr is not None and not isinstance(sr, CascadeStage):
            sr = load_stage(sr)
        completed = []
        for i, record in enumerate(held_out):
            request = CompletionRequest(record.subject_id, (record.age_months,))
            scan_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
            completed.extend(
                complete_subject(
                    gen, sr, cohort, request, seed=scan_seed, sampling=sampling
                )
            )
        scores = score_completions(name, completed, held_out, ssim_params)
        all_scores.append(scores)

    for scores in all_scores:
        logging.info(
            f"Variant {scores['variant'].iloc[0]}: mean PSNR "
            f"{scores['psnr_db'].mean():.2f} dB, mean SSIM "
            f"{scores['ssim'].mean():.4f} on {len(scores)} scans."
        )

    if all_scores:
        scores = pd.concat(all_scores, ignore_index=True)
    else:
        scores = pd.DataFrame(columns=SCORE_COLUMNS)
    return summarize_scores(scores), scores


def refine_vs_trilinear(
    sr,
    scans: Sequence[ScanRecord],
    seed: int = 0,
    sampling: Optional[SamplingConfig] = None,
    ssim_params: Optional[SsimParams] = None,
) -> pd.DataFrame:
    """
    Downsamples every scan by 2, maps it back with the refine stage and with trilinear
    upsampling, and scores both against the original.

    Args:
        sr: Refine stage as :class:`CascadeStage` or checkpoint path.
        scans: High-resolution scans at the dims the refine stage produces.
        seed: Base seed, the i-th scan uses stream ``(seed, i)``.
        sampling: Reverse process configuration.
        ssim_params: SSIM parameters, ``data_range`` is also used for PSNR.

    Returns:
        Score table with variants ``sr`` and ``trilinear``.
    """
    sampling = sampling or SamplingConfig()
    sr = sr if isinstance(sr, CascadeStage) else load_stage(sr)
    refined, upsampled = [], []
    for i, record in enumerate(scans):
        z0 = resample_down2(record.volume)
        scan_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        x0 = refine(sr, z0, sampling, seed=scan_seed)
        x0 = normalize_completion(x0, sampling.normalization)
        for target, volume in [(refined, x0), (upsampled, upsample_trilinear(z0))]:
            target.append(
                ScanRecord(
                    subject_id=record.subject_id,
                    age_months=record.age_months,
                    volume=volume,
                    provenance=Provenance.GENERATED,
                )
            )
    return pd.concat(
        [
            score_completions("sr", refined, scans, ssim_params),
            score_completions("trilinear", upsampled, scans, ssim_params),
        ],
        ignore_index=True,
    )
