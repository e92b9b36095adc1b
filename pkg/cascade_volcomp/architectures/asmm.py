"""
Generate-stage denoising network with asynchronous multimodal conditioning.

The noisy volume ``x_t`` and the guidance volume pass through two encoders with
separate weights. At every level the guidance features are concatenated onto the skip
connection of the decoder, and the guidance bottleneck is concatenated onto the image
bottleneck. The target age enters at the bottleneck only: the flattened bottleneck
features attend over a few age tokens and the attention output is added back. The
diffusion step is embedded and added inside every residual block.

The following models are available.

* ``asmm_desk``: Full network for 20x24x20 volumes.
* ``asmm_shared_desk``: Ablation with a single encoder, the guidance volume is
  concatenated to ``x_t`` as a second input channel.
* ``asmm_tiny``: Small network on 8x8x8 volumes for gradient checks.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import tensorflow as tf

from ..errors import ConfigError
from ..layers import (
    AgeEmbedding,
    CrossAttention,
    Decoder3D,
    Encoder3D,
    OutputHead3D,
    ResBlock3D,
    TimeEmbedding,
)
from ..models import ModelConfig, register_model
from ..volume import Volume3D
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
__all__ = ["AsmmConfig", "AsmmUNet", "GuidanceBundle", "denoise_forward"]

GUIDANCE_MODES = ("independent", "concat")


@dataclass
class AsmmConfig(ModelConfig):
    """
    Configuration class for the generate-stage denoiser.

    Parameters:
        name: Name of the model.
        in_dims: Spatial dims (X, Y, Z) of ``x_t`` and of the guidance volume.
        base_channels: Channels of the first level.
        channel_multipliers: Channel multiplier for each of the 4 levels.
        nb_groups: Number of groups in group normalization.
        time_embed_dim: Dimension of the diffusion step embedding.
        age_embed_dim: Dimension of each age token.
        age_tokens: Number of age tokens used as keys/values at the bottleneck.
        attention_heads: Number of heads in the bottleneck cross-attention.
        guidance_mode: ``"independent"`` uses a separate guidance encoder,
            ``"concat"`` feeds the guidance as a second channel to a single encoder.
        norm_layer: Normalization layer in residual blocks.
        act_layer: Activation layer.
    """

    in_dims: Tuple[int, int, int] = (20, 24, 20)
    base_channels: int = 16
    channel_multipliers: Tuple[int, ...] = (1, 2, 4, 4)
    nb_groups: int = 8
    time_embed_dim: int = 64
    age_embed_dim: int = 64
    age_tokens: int = 4
    attention_heads: int = 4
    guidance_mode: str = "independent"
    norm_layer: str = "group_norm"
    act_layer: str = "swish"

    @property
    def channels(self) -> Tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.channel_multipliers)


@dataclass(frozen=True)
class GuidanceBundle:
    """Guidance volume and target age (in months) that condition one sample."""

    guide_volume: Volume3D
    target_age_months: float

    def __post_init__(self):
        age = float(self.target_age_months)
        if not np.isfinite(age) or age <= 0:
            raise ValueError(f"Target age has to be positive and finite, got {age}.")
        object.__setattr__(self, "target_age_months", age)


class AsmmUNet(tf.keras.Model):
    """
    Denoising network for the generate stage.

    The inputs are a dictionary with keys

    * ``x_t``: noisy volumes, (B, X, Y, Z, 1),
    * ``t``: diffusion steps, (B,),
    * ``guide``: guidance volumes, (B, X, Y, Z, 1),
    * ``age``: target ages in months, (B,),

    and the output is the predicted noise with the shape of ``x_t``.

    Parameters:
        cfg: Configuration class for the model.
        **kwargs: Arguments are passed to ``tf.keras.Model``.
    """

    cfg_class = AsmmConfig
    stage = "generate"

    def __init__(self, cfg: AsmmConfig, **kwargs):
        super().__init__(**kwargs)
        if len(cfg.channel_multipliers) != 4:
            raise ConfigError(
                f"Need exactly 4 channel multipliers, got {cfg.channel_multipliers}."
            )
        if cfg.guidance_mode not in GUIDANCE_MODES:
            raise ConfigError(f"Unknown guidance mode: {cfg.guidance_mode}.")
        self.cfg = cfg
        self.pads = pad_amounts(cfg.in_dims)
        block_kwargs = {
            "norm_layer": cfg.norm_layer,
            "nb_groups": cfg.nb_groups,
            "act_layer": cfg.act_layer,
        }
        channels = cfg.channels

        self.time_embed = TimeEmbedding(
            cfg.time_embed_dim, act_layer=cfg.act_layer, name="time_embed"
        )
        self.age_embed = AgeEmbedding(
            cfg.age_embed_dim,
            nb_tokens=cfg.age_tokens,
            act_layer=cfg.act_layer,
            name="age_embed",
        )
        self.encoder_x = Encoder3D(channels, name="encoder_x", **block_kwargs)
        self.encoder_guide = (
            Encoder3D(channels, name="encoder_guide", **block_kwargs)
            if cfg.guidance_mode == "independent"
            else None
        )
        self.mid_block1 = ResBlock3D(channels[-1], name="mid/block1", **block_kwargs)
        self.mid_attn = CrossAttention(
            cfg.attention_heads,
            norm_layer=cfg.norm_layer,
            nb_groups=cfg.nb_groups,
            name="mid/attn",
        )
        self.mid_block2 = ResBlock3D(channels[-1], name="mid/block2", **block_kwargs)
        self.decoder = Decoder3D(channels, name="decoder", **block_kwargs)
        self.head = OutputHead3D(1, name="head", **block_kwargs)

    @property
    def dummy_inputs(self) -> dict:
        """Returns a dictionary of inputs of the correct shape for inference."""
        shape = (1, *self.cfg.in_dims, 1)
        return {
            "x_t": tf.zeros(shape),
            "t": tf.ones((1,)),
            "guide": tf.zeros(shape),
            "age": tf.ones((1,)),
        }

    def call(self, inputs, training: bool = False, return_features: bool = False):
        """
        Forward pass.

        Arguments:
            inputs: Dictionary with keys ``x_t``, ``t``, ``guide`` and ``age``.
            training: Unused, no layer behaves differently during training.
            return_features: If ``True``, we also return a dictionary with
                intermediate features, including the bottleneck attention scores.

        Returns:
            The predicted noise, or a tuple ``(eps_hat, features)``.
        """
        x = tf.cast(inputs["x_t"], self.compute_dtype)
        guide = tf.cast(inputs["guide"], self.compute_dtype)
        check_dims(x, self.cfg.in_dims, "x_t")
        check_dims(guide, self.cfg.in_dims, "guide")
        features = {}

        temb = self.time_embed(inputs["t"])
        age_tokens = self.age_embed(inputs["age"])
        x = pad_volume(x, self.pads)
        guide = pad_volume(guide, self.pads)

        if self.encoder_guide is not None:
            h, skips_x = self.encoder_x(x, temb)
            h_guide, skips_guide = self.encoder_guide(guide, temb)
            features["bottleneck_guide"] = h_guide
            h = tf.concat([h, h_guide], axis=-1)
            skips = [[a, b] for a, b in zip(skips_x, skips_guide)]
        else:
            h, skips_x = self.encoder_x(tf.concat([x, guide], axis=-1), temb)
            skips = [[a] for a in skips_x]
        features["bottleneck"] = h

        h = self.mid_block1(h, temb)
        h, scores = self.mid_attn(h, age_tokens, return_scores=True)
        features["attention_scores"] = scores
        h = self.mid_block2(h, temb)

        h = self.decoder(h, skips, temb)
        h = self.head(h)
        eps_hat = crop_volume(h, self.pads)
        features["eps_hat"] = eps_hat
        return (eps_hat, features) if return_features else eps_hat


def denoise_forward(model: AsmmUNet, x_t, t, guidance: GuidanceBundle) -> np.ndarray:
    """
    Predicts the noise in ``x_t`` for a single guidance bundle.

    Args:
        model: Generate-stage network.
        x_t: Noisy volume (X, Y, Z) or batch (B, X, Y, Z) of noisy volumes.
        t: Diffusion step, scalar or one per batch entry.
        guidance: Guidance volume and target age, shared across the batch.

    Returns:
        The predicted noise as float64 array of the shape of ``x_t``.
    """
    check_weights_finite(model)
    dims = model.cfg.in_dims
    if guidance.guide_volume.dims != tuple(dims):
        raise ValueError(
            f"Guidance volume has dims {guidance.guide_volume.dims}, model expects "
            f"{tuple(dims)}."
        )
    x, single = to_batch(x_t, dims, model.compute_dtype)
    batch_size = x.shape[0]
    guide, _ = to_batch(guidance.guide_volume.voxels, dims, model.compute_dtype)
    inputs = {
        "x_t": x,
        "t": as_steps(t, batch_size),
        "guide": tf.repeat(guide, batch_size, axis=0),
        "age": np.full((batch_size,), guidance.target_age_months),
    }
    return from_batch(model(inputs), single)


@register_model
def asmm_desk():
    cfg = AsmmConfig(name="asmm_desk")
    return AsmmUNet, cfg


@register_model
def asmm_shared_desk():
    cfg = AsmmConfig(name="asmm_shared_desk", guidance_mode="concat")
    return AsmmUNet, cfg


@register_model
def asmm_tiny():
    cfg = AsmmConfig(
        name="asmm_tiny",
        in_dims=(8, 8, 8),
        base_channels=4,
        channel_multipliers=(1, 2, 2, 2),
        nb_groups=2,
        time_embed_dim=8,
        age_embed_dim=8,
        age_tokens=2,
        attention_heads=2,
    )
    return AsmmUNet, cfg
