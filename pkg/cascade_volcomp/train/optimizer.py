from dataclasses import dataclass
from typing import Tuple

import tensorflow as tf

from .registry import cfg_serializable


@dataclass
class OptimizerConfig:
    lr: float = 2e-4
    # Which optimizer to use. Currently supports `adam` and `sgd`.
    optimizer: str = "adam"
    # Momentum parameters. `sgd` only uses `betas[0]` for its momentum, but for
    # consistency we always pass a tuple.
    betas: Tuple[float, float] = (0.9, 0.999)
    # Gradient clipping. `global_clipnorm` clips the gradients of all weights jointly
    # by their global l2-norm, `clipvalue` clips each entry. -1 disables clipping.
    global_clipnorm: float = 1.0
    clipvalue: float = -1.0
    # Lr schedule. Currently, supports `const` and `cosine_decay`. The latter decays
    # to zero over the training run.
    lr_schedule: str = "const"


@cfg_serializable
class OptimizerFactory:
    cfg_class = OptimizerConfig

    def __init__(self, cfg: OptimizerConfig, nb_steps: int):
        self.cfg = cfg
        self.nb_steps = nb_steps

    def lr_schedule(self):
        """Create learning rate schedule as defined by config."""
        cfg = self.cfg

        if cfg.lr_schedule == "const":
            lr = cfg.lr
        elif cfg.lr_schedule == "cosine_decay":
            lr = tf.keras.optimizers.schedules.CosineDecay(
                cfg.lr, decay_steps=max(self.nb_steps, 1)
            )
        else:
            raise ValueError(f"Unknown learning rate schedule {cfg.lr_schedule}")
        return lr

    def optimizer(self, lr):
        cfg = self.cfg

        if cfg.global_clipnorm != -1.0 and cfg.clipvalue != -1.0:
            raise ValueError(
                "`global_clipnorm` and `clipvalue` cannot both be used simultaneously."
            )

        # We cannot use `None` in the config class, because we want to adhere to typing
        # to make parsing of configs easier. But TF expects `None`.
        global_clipnorm = cfg.global_clipnorm if cfg.global_clipnorm != -1.0 else None
        clipvalue = cfg.clipvalue if cfg.clipvalue != -1.0 else None

        if cfg.optimizer == "adam":
            opt = tf.keras.optimizers.Adam(
                learning_rate=lr,
                beta_1=cfg.betas[0],
                beta_2=cfg.betas[1],
                global_clipnorm=global_clipnorm,
                clipvalue=clipvalue,
            )
        elif cfg.optimizer == "sgd":
            opt = tf.keras.optimizers.SGD(
                learning_rate=lr,
                momentum=cfg.betas[0],
                global_clipnorm=global_clipnorm,
                clipvalue=clipvalue,
            )
        else:
            raise ValueError(f"Unknown optimizer: {cfg.optimizer}.")

        return opt

    def __call__(self):
        lr = self.lr_schedule()
        opt = self.optimizer(lr)
        return opt
