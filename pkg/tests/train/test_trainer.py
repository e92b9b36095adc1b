import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from cascade_volcomp import create_model
from cascade_volcomp.errors import ConfigError, DivergenceError
from cascade_volcomp.models import load_checkpoint
from cascade_volcomp.phantom import generate_cohort
from cascade_volcomp.pipeline import load_stage
from cascade_volcomp.train import ProblemBase, TrainConfig, Trainer, train_stage

from ..helpers import quiet_growth_law, small_phantom_config


@pytest.fixture(scope="module")
def cohort():
    cohort, _ = generate_cohort(small_phantom_config(), quiet_growth_law())
    return cohort


def _train_config(stage, **kwargs):
    params = dict(
        stage=stage,
        model_name="asmm_tiny" if stage == "generate" else "sr_tiny",
        timesteps=10,
        batch_size=2,
        max_steps=3,
        checkpoint_every=2,
        display_loss_every_it=1,
        low_dims=(8, 8, 8) if stage == "generate" else (4, 4, 4),
        seed=0,
    )
    params.update(kwargs)
    return TrainConfig(**params)


@pytest.mark.parametrize("stage", ["generate", "sr"])
@pytest.mark.timeout(300)
def test_train_stage(stage, cohort):
    cfg = _train_config(stage)
    with tempfile.TemporaryDirectory() as tmpdir:
        tmpdir = Path(tmpdir)
        res = train_stage(cohort, cfg, out_dir=tmpdir)

        assert res.final_checkpoint == tmpdir / "final.vckp"
        assert (tmpdir / "ckpt_2.vckp").exists()
        assert not (tmpdir / "ckpt_3.vckp").exists()

        saved = yaml.safe_load((tmpdir / "config.yaml").read_text())
        assert saved["stage"] == stage
        assert saved["timesteps"] == 10

        loss_log = pd.read_csv(tmpdir / "loss.csv")
        assert list(loss_log.columns) == ["step", "loss", "wall_seconds"]
        assert loss_log["step"].tolist() == [1, 2, 3]
        assert np.all(np.isfinite(loss_log["loss"]))
        assert np.all(np.diff(loss_log["wall_seconds"]) >= 0)
        assert np.allclose(loss_log["loss"], res.loss_log["loss"])

        _, header = load_checkpoint(res.final_checkpoint)
        assert header["tag"] == "step-3"
        assert header["extra"]["stage"] == stage
        assert header["extra"]["schedule"]["timesteps"] == 10

        stage_ = load_stage(res.final_checkpoint)
        assert stage_.schedule.T == 10
        assert stage_.dims == (8, 8, 8)


@pytest.mark.timeout(300)
def test_train_deterministic(cohort):
    cfg = _train_config("generate", checkpoint_every=-1)
    a = Trainer(cfg, cohort).train()
    b = Trainer(cfg, cohort).train()
    assert a.final_checkpoint is None
    assert np.max(np.abs(a.loss_log["loss"] - b.loss_log["loss"])) < 1e-5


@pytest.mark.timeout(120)
def test_zero_steps_keeps_initialization(cohort):
    model = create_model("sr_tiny")
    weights = [w.numpy() for w in model.weights]
    cfg = _train_config("sr", max_steps=0)
    with tempfile.TemporaryDirectory() as tmpdir:
        res = train_stage(cohort, cfg, out_dir=tmpdir, model=model)
        assert res.loss_log.empty
        loaded, header = load_checkpoint(res.final_checkpoint)
    assert header["tag"] == "step-0"
    for w_a, w_b in zip(weights, loaded.weights):
        assert np.array_equal(w_a, w_b.numpy())


@pytest.mark.timeout(120)
def test_divergence(cohort):
    model = create_model("asmm_tiny")
    model.weights[0].assign(np.full(model.weights[0].shape, np.nan))
    cfg = _train_config("generate")
    with tempfile.TemporaryDirectory() as tmpdir:
        tmpdir = Path(tmpdir)
        with pytest.raises(DivergenceError):
            train_stage(cohort, cfg, out_dir=tmpdir, model=model)
        # The loss log up to the failing step survives
        loss_log = pd.read_csv(tmpdir / "loss.csv")
        assert loss_log["step"].tolist() == [1]
        assert not (tmpdir / "final.vckp").exists()


@pytest.mark.parametrize(
    "stage, model_name", [("generate", "sr_tiny"), ("sr", "asmm_tiny")]
)
def test_model_for_wrong_stage(stage, model_name, cohort):
    cfg = _train_config(stage, model_name=model_name)
    with pytest.raises(ConfigError):
        Trainer(cfg, cohort)


class _StepOnlyProblem(ProblemBase):
    def train_step(self, data, it):
        return 0.0, {}


def test_problem_without_save_model():
    problem = _StepOnlyProblem()
    assert problem.checkpoint_extra() == {}
    with pytest.raises(NotImplementedError):
        problem.save_model("final.vckp", tag="step-0")
