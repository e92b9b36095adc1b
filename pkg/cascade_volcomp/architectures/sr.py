"""
Refine-stage super-resolution denoiser.

The low-resolution condition ``z`` is upsampled by a learned stride-2 transposed
convolution and concatenated with ``x_t`` as a second input channel. The backbone is
the encoder-decoder of the generate stage without guidance encoder and age attention.

The following models are available.

* ``sr_desk``: 20x24x20 -> 40x48x40.
* ``sr_tiny``: 4x4x4 -> 8x8x8, for tests.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
import tensorflow as tf

from ..diffusion import NoiseSchedule, ddim_sample
from ..errors import ConfigError
from ..layers import (
    Decoder3D,
    Encoder3D,
    OutputHead3D,
    ResBlock3D,
    TimeEmbedding,
    Upsample3D,
)
from ..models import ModelConfig, register_model
from .common import (
    as_steps,
    check_dims,
    check_weights_finite,
    crop_volume,
    from_batch,
    pad_amounts,
    pad_volume,
    to_batch,
)

# Model registry will add each entrypoint fn to this
__all__ = ["SrConfig", "SrUNet", "sr_denoise_forward", "sr_sample", "upsample_cond"]


@dataclass
class SrConfig(ModelConfig):
    """
    Configuration class for the super-resolution denoiser.

    Parameters:
        name: Name of the model.
        low_dims: Spatial dims of the low-resolution condition. The output has twice
            these dims along every axis.
        base_channels: Channels of the first level.
        channel_multipliers: Channel multiplier for each of the 4 levels.
        nb_groups: Number of groups in group normalization.
        time_embed_dim: Dimension of the diffusion step embedding.
        norm_layer: Normalization layer in residual blocks.
        act_layer: Activation layer.
    """

    low_dims: Tuple[int, int, int] = (20, 24, 20)
    base_channels: int = 16
    channel_multipliers: Tuple[int, ...] = (1, 2, 4, 4)
    nb_groups: int = 8
    time_embed_dim: int = 64
    norm_layer: str = "group_norm"
    act_layer: str = "swish"

    @property
    def high_dims(self) -> Tuple[int, int, int]:
        return tuple(2 * n for n in self.low_dims)

    @property
    def channels(self) -> Tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_multipliers)


class SrUNet(tf.keras.Model):
    """
    Denoising network for the refine stage.

    The inputs are a dictionary with keys

    * ``x_t``: noisy high-resolution volumes, (B, 2X, 2Y, 2Z, 1),
    * ``t``: diffusion steps, (B,),
    * ``z``: low-resolution conditions, (B, X, Y, Z, 1),

    and the output is the predicted noise with the shape of ``x_t``.

    Parameters:
        cfg: Configuration class for the model.
        **kwargs: Arguments are passed to ``tf.keras.Model``.
    """

    cfg_class = SrConfig
    stage = "sr"

    def __init__(self, cfg: SrConfig, **kwargs):
        super().__init__(**kwargs)
        if len(cfg.channel_multipliers) != 4:
            raise ConfigError(
                f"Need exactly 4 channel multipliers, got {cfg.channel_multipliers}."
            )
        self.cfg = cfg
        self.pads = pad_amounts(cfg.high_dims)
        block_kwargs = {
            "norm_layer": cfg.norm_layer,
            "nb_groups": cfg.nb_groups,
            "act_layer": cfg.act_layer,
        }
        channels = cfg.channels

        self.time_embed = TimeEmbedding(
            cfg.time_embed_dim, act_layer=cfg.act_layer, name="time_embed"
        )
        self.upsample = Upsample3D(filters=1, name="upsample_cond")
        self.encoder = Encoder3D(channels, name="encoder", **block_kwargs)
        self.mid_block1 = ResBlock3D(channels[-1], name="mid/block1", **block_kwargs)
        self.mid_block2 = ResBlock3D(channels[-1], name="mid/block2", **block_kwargs)
        self.decoder = Decoder3D(channels, name="decoder", **block_kwargs)
        self.head = OutputHead3D(1, name="head", **block_kwargs)

    @property
    def dummy_inputs(self) -> dict:
        """Returns a dictionary of inputs of the correct shape for inference."""
        return {
            "x_t": tf.zeros((1, *self.cfg.high_dims, 1)),
            "t": tf.ones((1,)),
            "z": tf.zeros((1, *self.cfg.low_dims, 1)),
        }

    def upsample_cond(self, z) -> tf.Tensor:
        """Maps (B, X, Y, Z, 1) conditions to (B, 2X, 2Y, 2Z, 1)."""
        z = tf.cast(z, self.compute_dtype)
        check_dims(z, self.cfg.low_dims, "z")
        return self.upsample(z)

    def call(self, inputs, training: bool = False):
        x = tf.cast(inputs["x_t"], self.compute_dtype)
        check_dims(x, self.cfg.high_dims, "x_t")
        cond = self.upsample_cond(inputs["z"])

        temb = self.time_embed(inputs["t"])
        h = pad_volume(tf.concat([x, cond], axis=-1), self.pads)
        h, skips = self.encoder(h, temb)
        h = self.mid_block1(h, temb)
        h = self.mid_block2(h, temb)
        h = self.decoder(h, [[s] for s in skips], temb)
        h = self.head(h)
        return crop_volume(h, self.pads)


def upsample_cond(model: SrUNet, z) -> np.ndarray:
    """
    Applies the learned conditioning upsampler to a low-resolution volume (X, Y, Z) or
    batch (B, X, Y, Z). Returns a float64 array with doubled spatial dims.
    """
    z, single = to_batch(z, model.cfg.low_dims, model.compute_dtype)
    if not model.built:
        model(model.dummy_inputs)
    return from_batch(model.upsample_cond(z), single)


def sr_denoise_forward(model: SrUNet, x_t, t, z_cond) -> np.ndarray:
    """
    Predicts the noise in the high-resolution ``x_t`` given the low-resolution
    condition ``z_cond``. Single volumes and batches are accepted, a single condition
    is shared across a batch of ``x_t``.
    """
    check_weights_finite(model)
    x, single = to_batch(x_t, model.cfg.high_dims, model.compute_dtype)
    z, _ = to_batch(z_cond, model.cfg.low_dims, model.compute_dtype)
    batch_size = x.shape[0]
    if z.shape[0] == 1 and batch_size > 1:
        z = tf.repeat(z, batch_size, axis=0)
    if z.shape[0] != batch_size:
        raise ValueError(f"Got {z.shape[0]} conditions for {batch_size} volumes.")
    inputs = {"x_t": x, "t": as_steps(t, batch_size), "z": z}
    return from_batch(model(inputs), single)


SrDenoiseFn = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


def sr_sample(
    denoiser: Union[SrUNet, SrDenoiseFn],
    z0,
    sched: NoiseSchedule,
    steps: int = 50,
    seed: int = 0,
    eta: float = 0.0,
    timesteps: Optional[np.ndarray] = None,
    progress: bool = False,
) -> np.ndarray:
    """
    Samples a high-resolution volume conditioned on the low-resolution ``z0`` with
    DDIM, starting from Gaussian noise at twice the dims of ``z0``.

    Args:
        denoiser: Refine-stage network or a function ``fn(x_t, t, z0) -> eps_hat``.
        z0: Low-resolution volume (X, Y, Z).
        sched: Noise schedule the denoiser was trained with.
        steps: Number of DDIM steps.
        seed: Seed for the initial noise.
        eta: DDIM stochasticity.
        timesteps: Explicit descending sub-sequence, overrides ``steps``.
        progress: Show a progress bar.

    Returns:
        float64 array of dims (2X, 2Y, 2Z).
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 3:
        raise ValueError(f"z0 has to be a single volume, got shape {z0.shape}.")
    if not np.all(np.isfinite(z0)):
        raise ValueError("z0 has non-finite values.")

    if isinstance(denoiser, SrUNet):
        if tuple(z0.shape) != tuple(denoiser.cfg.low_dims):
            raise ValueError(
                f"z0 has dims {z0.shape}, model expects {denoiser.cfg.low_dims}."
            )
        check_weights_finite(denoiser)

        def _denoise(x_t, t):
            x, _ = to_batch(x_t, denoiser.cfg.high_dims, denoiser.compute_dtype)
            z, _ = to_batch(z0, denoiser.cfg.low_dims, denoiser.compute_dtype)
            eps_hat = denoiser({"x_t": x, "t": np.array([float(t)]), "z": z})
            return from_batch(eps_hat, single=True)

    else:

        def _denoise(x_t, t):
            return denoiser(x_t, t, z0)

    shape = tuple(2 * n for n in z0.shape)
    return ddim_sample(
        _denoise,
        shape,
        sched,
        steps=steps,
        seed=seed,
        eta=eta,
        timesteps=timesteps,
        progress=progress,
    )


@register_model
def sr_desk():
    cfg = SrConfig(name="sr_desk")
    return SrUNet, cfg


@register_model
def sr_tiny():
    cfg = SrConfig(
        name="sr_tiny",
        low_dims=(4, 4, 4),
        base_channels=4,
        channel_multipliers=(1, 2, 2, 2),
        nb_groups=2,
        time_embed_dim=8,
    )
    return SrUNet, cfg
