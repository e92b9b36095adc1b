import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import tensorflow as tf

from ..diffusion import NoiseSchedule, make_linear_schedule
from ..errors import ConfigError, DivergenceError
from ..volume import LongitudinalCohort
from .config import dump_config
from .optimizer import OptimizerConfig
from .registry import cfg_serializable, get_class

STAGES = ("generate", "sr")

# Per-stage defaults for fields left at their sentinel values.
STAGE_DEFAULTS = {
    "generate": {"model_name": "asmm_desk", "beta_end": 5e-3, "timesteps": 4000},
    "sr": {"model_name": "sr_desk", "beta_end": 2e-2, "timesteps": 1000},
}
PROBLEM_CLASSES = {"generate": "GenerateProblem", "sr": "SrProblem"}


@dataclass
class TrainConfig:
    """
    Configuration class for training one stage of the cascade.

    Attributes:
        stage: ``"generate"`` trains the low-resolution denoiser conditioned on
            guidance volume and age, ``"sr"`` the super-resolution denoiser.
        model_name: Registered model to train. Empty selects ``asmm_desk`` or
            ``sr_desk`` depending on the stage.
        beta_start: First entry of the linear noise schedule.
        beta_end: Last entry of the linear noise schedule. -1 selects the stage
            default, 5e-3 for ``generate`` and 2e-2 for ``sr``.
        timesteps: Length of the noise schedule. -1 selects the stage default, 4000
            for ``generate`` and 1000 for ``sr``.
        optimizer: Optimizer and gradient clipping.
        batch_size: Number of volumes per step.
        max_steps: Number of training steps. With 0 steps the final checkpoint holds
            the initialization.
        seed: Seed for weight initialization, data sampling and noise.
        checkpoint_every: Save ``ckpt_<step>.vckp`` every given number of steps. -1
            saves only the final checkpoint.
        augment: Randomly rotate guidance volumes (``generate`` only).
        max_degrees: Maximal rotation angle per axis.
        low_dims: Low-resolution grid. The generate stage works on this grid, the
            refine stage maps it to twice its dims.
        display_loss_every_it: Log the training loss every given number of steps.
        out_dir: Where the loss log, checkpoints and config are written. Nothing is
            written if empty.
    """

    stage: str = "generate"
    model_name: str = ""
    beta_start: float = 1e-4
    beta_end: float = -1.0
    timesteps: int = -1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 2
    max_steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    augment: bool = True
    max_degrees: float = 5.0
    low_dims: Tuple[int, int, int] = (20, 24, 20)
    display_loss_every_it: int = 100
    out_dir: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"Unknown stage {self.stage}, expected one of {STAGES}.")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size has to be positive, got {self.batch_size}.")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps has to be >= 0, got {self.max_steps}.")
        if not 0.0 <= self.max_degrees <= 5.0:
            raise ConfigError(
                f"max_degrees has to be in [0, 5], got {self.max_degrees}."
            )
        self.low_dims = tuple(self.low_dims)

    def resolved(self) -> "TrainConfig":
        """Returns a copy with sentinel values replaced by the stage defaults."""
        defaults = STAGE_DEFAULTS[self.stage]
        return dataclasses.replace(
            self,
            model_name=self.model_name or defaults["model_name"],
            beta_end=self.beta_end if self.beta_end != -1.0 else defaults["beta_end"],
            timesteps=self.timesteps if self.timesteps != -1 else defaults["timesteps"],
        )

    def schedule(self) -> NoiseSchedule:
        cfg = self.resolved()
        return make_linear_schedule(cfg.beta_start, cfg.beta_end, cfg.timesteps)


@dataclass
class TrainResult:
    final_checkpoint: Optional[Path]
    loss_log: pd.DataFrame
    model: tf.keras.Model


@cfg_serializable
class Trainer:
    """
    Trainer for one stage of the cascade. Each step samples a batch, a diffusion step
    ``t`` uniformly from ``[1, T]`` and Gaussian noise per volume, and takes one
    optimizer step on the noise-prediction loss. Training aborts with a
    :class:`DivergenceError` if the loss becomes non-finite.
    """

    cfg_class = TrainConfig

    def __init__(
        self,
        cfg: TrainConfig,
        cohort: LongitudinalCohort,
        out_dir: Union[str, Path, None] = None,
        model: Optional[tf.keras.Model] = None,
    ):
        self.cfg = cfg.resolved()
        out_dir = out_dir if out_dir is not None else self.cfg.out_dir
        self.out_dir = Path(out_dir) if out_dir else None

        # Weight initialization draws from the global TF seed
        tf.keras.utils.set_random_seed(self.cfg.seed)
        self.problem = get_class(PROBLEM_CLASSES[self.cfg.stage])(self.cfg, model=model)
        self.dataset = self.problem.make_dataset(cohort).get_ds()
        self.rows = []

    def train(self) -> TrainResult:
        """Training loop"""
        cfg = self.cfg
        logging.info(f"Training stage {cfg.stage} ({cfg.model_name}) ...")
        if self.out_dir is not None:
            dump_config(cfg, self.out_dir / "config.yaml")

        duration = tf.keras.metrics.Mean(dtype=tf.float32)  # Time tracker
        start_time = time.time()
        last_time = start_time
        ds_iter = iter(self.dataset)
        for it in range(1, cfg.max_steps + 1):
            data = next(ds_iter)
            loss, logs = self.problem.train_step(data, it=it)
            now = time.time()
            duration.update_state(now - last_time)
            last_time = now
            elapsed = now - start_time
            self.rows.append({"step": it, "loss": loss, "wall_seconds": elapsed})

            if not np.isfinite(loss):
                self.write_loss_log()
                raise DivergenceError(f"Loss became {loss} at step {it}.")

            # Print training progress
            if it == 1 or (
                cfg.display_loss_every_it > 0 and it % cfg.display_loss_every_it == 0
            ):
                self.print_training_progress(it, loss, duration)
                duration.reset_states()

            # Save checkpoint
            if cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
                self.save_ckpt(f"ckpt_{it}.vckp", tag=f"step-{it}")

        final_checkpoint = self.save_ckpt("final.vckp", tag=f"step-{cfg.max_steps}")
        loss_log = self.write_loss_log()
        logging.info("... done training.")
        return TrainResult(
            final_checkpoint=final_checkpoint,
            loss_log=loss_log,
            model=self.problem.model,
        )

    def print_training_progress(self, it, loss, duration):
        sec_per_step = duration.result().numpy()
        status = (
            "Train: "
            + f"Stage {self.cfg.stage} : "
            + f"Iter {it} "
            + f"sec/step={sec_per_step:.3f}, "
            + f"loss={loss:.5f}"
        )
        logging.info(status)

    def write_loss_log(self) -> pd.DataFrame:
        loss_log = pd.DataFrame(self.rows, columns=["step", "loss", "wall_seconds"])
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            loss_log.to_csv(self.out_dir / "loss.csv", index=False)
        return loss_log

    def save_ckpt(self, filename: str, tag: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        path = self.out_dir / filename
        self.problem.save_model(path, tag=tag)
        return path


def train_stage(
    cohort: LongitudinalCohort,
    cfg: TrainConfig,
    out_dir: Union[str, Path, None] = None,
    model: Optional[tf.keras.Model] = None,
) -> TrainResult:
    """Trains one stage on ``cohort`` and returns the final checkpoint and loss log."""
    return Trainer(cfg, cohort, out_dir=out_dir, model=model).train()
