from typing import Optional

import numpy as np
import tensorflow as tf

from ...diffusion import q_sample, training_loss
from ...errors import ConfigError
from ...models import create_model, model_stage, save_checkpoint
from ...volume import LongitudinalCohort
from ..datasets import GeneratePairDataset, SrPairDataset
from ..interface import ProblemBase
from ..optimizer import OptimizerFactory
from ..registry import cfg_serializable
from ..trainer import TrainConfig


class DiffusionProblem(ProblemBase):
    """
    Noise-prediction training of a conditional denoiser. Subclasses define which
    network is built, which data it sees and how the batch is fed to the network.
    """

    cfg_class = TrainConfig

    def __init__(self, cfg: TrainConfig, model: Optional[tf.keras.Model] = None):
        self.cfg = cfg.resolved()
        self.schedule = self.cfg.schedule()

        # Building the model
        if model is None:
            if model_stage(self.cfg.model_name) != self.cfg.stage:
                raise ConfigError(
                    f"Model {self.cfg.model_name} denoises for stage "
                    f"{model_stage(self.cfg.model_name)}, cannot train it as stage "
                    f"{self.cfg.stage}."
                )
            model = create_model(self.cfg.model_name, **self.model_overrides())
        self.model = model

        # Training metrics
        self.avg_loss = tf.keras.metrics.Mean(dtype=tf.float32)

        # Optimizer
        self.optimizer = OptimizerFactory(
            cfg=self.cfg.optimizer, nb_steps=self.cfg.max_steps
        )()

        # Diffusion steps and noise have their own stream, separate from the data
        self.rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, 1]))

    def model_overrides(self) -> dict:
        raise NotImplementedError

    def make_dataset(self, cohort: LongitudinalCohort):
        raise NotImplementedError

    def model_inputs(self, x_t: tf.Tensor, t: np.ndarray, data: dict) -> dict:
        raise NotImplementedError

    def noisy_batch(self, x0: np.ndarray):
        """Samples ``t`` uniformly from ``[1, T]`` and noise, returns x_t, t and eps."""
        x0 = np.asarray(x0, dtype=np.float64)
        t = self.rng.integers(1, self.schedule.T + 1, size=x0.shape[0])
        eps = self.rng.standard_normal(x0.shape)
        x_t = q_sample(x0, t, eps, self.schedule)
        return x_t, t, eps

    def train_step(self, data, it):
        """Perform one step of training."""
        x_t, t, eps = self.noisy_batch(data["x0"])
        dtype = self.model.compute_dtype
        inputs = self.model_inputs(tf.cast(x_t, dtype), t, data)
        loss = self.train_step_inner(inputs, tf.constant(eps, dtype=dtype))
        loss = float(loss.numpy())

        self.avg_loss.update_state(loss)
        logs = {
            "train/loss": loss,
            "train/avg_loss": self.avg_loss.result().numpy(),
        }
        return loss, logs

    @tf.function
    def train_step_inner(self, inputs, eps):
        with tf.GradientTape() as tape:
            eps_hat = self.model(inputs, training=True)
            # Regardless of the model dtype, we compute the loss in float32
            loss = training_loss(tf.cast(eps, tf.float32), tf.cast(eps_hat, tf.float32))

        grads = tape.gradient(loss, self.model.trainable_variables)
        self.optimizer.apply_gradients(zip(grads, self.model.trainable_variables))
        return loss

    def checkpoint_extra(self) -> dict:
        return {
            "stage": self.cfg.stage,
            "schedule": {
                "beta_start": self.cfg.beta_start,
                "beta_end": self.cfg.beta_end,
                "timesteps": self.cfg.timesteps,
            },
        }

    def save_model(self, path, tag: str = ""):
        save_checkpoint(self.model, path, tag=tag, extra=self.checkpoint_extra())


@cfg_serializable
class GenerateProblem(DiffusionProblem):
    """Generate stage: denoiser conditioned on a guidance volume and the target age."""

    def model_overrides(self) -> dict:
        return {"in_dims": self.cfg.low_dims}

    def make_dataset(self, cohort: LongitudinalCohort):
        return GeneratePairDataset(
            cohort,
            dims=self.cfg.low_dims,
            batch_size=self.cfg.batch_size,
            seed=self.cfg.seed,
            max_degrees=self.cfg.max_degrees if self.cfg.augment else 0.0,
        )

    def model_inputs(self, x_t, t, data):
        dtype = self.model.compute_dtype
        return {
            "x_t": x_t,
            "t": tf.constant(t, dtype=tf.float32),
            "guide": tf.cast(data["guide"], dtype),
            "age": tf.cast(data["age"], tf.float32),
        }


@cfg_serializable
class SrProblem(DiffusionProblem):
    """Refine stage: denoiser at twice the low-resolution dims, conditioned on ``z``."""

    def model_overrides(self) -> dict:
        return {"low_dims": self.cfg.low_dims}

    def make_dataset(self, cohort: LongitudinalCohort):
        return SrPairDataset(
            cohort,
            low_dims=self.cfg.low_dims,
            batch_size=self.cfg.batch_size,
            seed=self.cfg.seed,
        )

    def model_inputs(self, x_t, t, data):
        return {
            "x_t": x_t,
            "t": tf.constant(t, dtype=tf.float32),
            "z": tf.cast(data["z"], self.model.compute_dtype),
        }
