"""
Desk-scale learning runs on a 4-subject phantom cohort at dims 20x24x20. Both stages
train for 2000 steps, which takes about an hour on CPU, so the tests are skipped by
default and run explicitly.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
import pytest

from cascade_volcomp.evaluation import (
    SegmentationConfig,
    ablation_report,
    fit_trajectories,
    hull_coverage,
    refine_vs_trilinear,
    trajectory_table,
)
from cascade_volcomp.phantom import (
    GrowthLaw,
    PhantomConfig,
    generate_cohort,
    mask_missing,
)
from cascade_volcomp.pipeline import SamplingConfig, complete_cohort
from cascade_volcomp.tissue import TISSUE_CLASSES
from cascade_volcomp.train import TrainConfig, TrainResult, train_stage
from cascade_volcomp.volume import LongitudinalCohort, ScanRecord

NB_STEPS = 2000


@dataclass
class DeskRun:
    law: GrowthLaw
    cohort: LongitudinalCohort
    held_out: List[ScanRecord]
    gen: TrainResult
    sr: TrainResult


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory) -> DeskRun:
    law = GrowthLaw()
    cohort, _ = generate_cohort(PhantomConfig(n_subjects=4), law)
    cohort, held_out = mask_missing(cohort, 0.3, seed=0)
    out_dir = Path(tmp_path_factory.mktemp("desk"))
    results = {
        stage: train_stage(
            cohort,
            TrainConfig(stage=stage, max_steps=NB_STEPS, checkpoint_every=-1),
            out_dir=out_dir / stage,
        )
        for stage in ["generate", "sr"]
    }
    return DeskRun(law, cohort, held_out, results["generate"], results["sr"])


@pytest.mark.skip()
@pytest.mark.timeout(3600)
def test_cascade_beats_copy(desk_run):
    loss = desk_run.gen.loss_log["loss"].to_numpy()
    assert len(loss) == NB_STEPS
    assert np.mean(loss[-100:]) <= 0.1 * np.mean(loss[:100])

    variants = {"full": (desk_run.gen.final_checkpoint, desk_run.sr.final_checkpoint)}
    summary, _ = ablation_report(
        variants, desk_run.held_out, desk_run.cohort, sampling=SamplingConfig()
    )
    summary = summary.set_index("variant")
    full, copy = summary.loc["full"], summary.loc["copy"]
    assert full["psnr_mean"] >= copy["psnr_mean"] + 1.0
    assert full["ssim_mean"] >= copy["ssim_mean"]


@pytest.mark.skip()
@pytest.mark.timeout(3600)
def test_refine_beats_trilinear(desk_run):
    # Subjects drawn from another seed were never seen in training
    unseen, _ = generate_cohort(PhantomConfig(n_subjects=2, seed=1), desk_run.law)
    scans = unseen.records()
    assert len(scans) >= 8

    scores = refine_vs_trilinear(desk_run.sr.final_checkpoint, scans)
    means = scores.groupby("variant")["psnr_db"].mean()
    assert means["sr"] > means["trilinear"]


@pytest.mark.skip()
@pytest.mark.timeout(5400)
def test_trajectory_recovery(desk_run):
    completed = complete_cohort(
        desk_run.gen.final_checkpoint,
        desk_run.sr.final_checkpoint,
        desk_run.cohort,
        seed=0,
    )
    assert len(completed) == len(desk_run.held_out)

    segmentation = SegmentationConfig()
    table = trajectory_table(
        desk_run.cohort.records() + completed,
        segmentation.thresholds,
        segmentation.cut,
    )
    models = fit_trajectories(table)
    for k, name in enumerate(TISSUE_CLASSES):
        beta1 = desk_run.law.beta1[k]
        assert np.sign(models[name].beta1) == np.sign(beta1)
        assert abs(models[name].beta1 - beta1) <= 0.25 * abs(beta1)

    # Every class has the same number of generated points
    coverage = hull_coverage(table)
    assert set(coverage) == set(TISSUE_CLASSES)
    assert np.mean(list(coverage.values())) >= 0.9
