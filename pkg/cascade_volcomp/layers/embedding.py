"""
Sinusoidal encodings of scalars (diffusion step, age in months) followed by an MLP.

Encoding layout for ``dim`` channels: entry ``2i`` is ``sin(v * w_i)`` and entry
``2i + 1`` is ``cos(v * w_i)`` with ``w_i = 10000^(-2i / dim)``.
"""
import numpy as np
import tensorflow as tf

from .factory import act_layer_factory, conv_initializers

__all__ = [
    "AgeEmbedding",
    "TimeEmbedding",
    "embed_age",
    "embed_time",
    "sinusoidal_encoding",
]


def sinusoidal_encoding(values, dim: int, dtype=None) -> tf.Tensor:
    """
    Encodes a scalar or a vector of B scalars as a (dim,) or (B, dim) tensor. The
    computation happens in float64 since arguments like ``4000 * w_0`` lose too much
    precision in float32.
    """
    if dim < 2 or dim % 2:
        raise ValueError(f"Encoding dimension has to be even and >= 2, got {dim}.")
    dtype = dtype or tf.keras.backend.floatx()
    values = tf.cast(tf.convert_to_tensor(values), tf.float64)
    freqs = tf.constant(
        1.0 / np.power(10000.0, 2.0 * np.arange(dim // 2) / dim), dtype=tf.float64
    )
    args = values[..., tf.newaxis] * freqs
    # Interleave so that sin and cos of the same frequency are neighbours.
    enc = tf.stack([tf.sin(args), tf.cos(args)], axis=-1)
    enc = tf.reshape(enc, tf.concat([tf.shape(values), [dim]], axis=0))
    return tf.cast(enc, dtype)


def embed_time(t, dim: int) -> tf.Tensor:
    """Sinusoidal encoding of the diffusion step ``t >= 0``, before the MLP."""
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"Diffusion step has to be non-negative, got {t}.")
    return sinusoidal_encoding(t, dim)


def embed_age(age_months, dim: int) -> tf.Tensor:
    """Sinusoidal encoding of the target age in months, before the MLP."""
    age = np.asarray(age_months, dtype=np.float64)
    if np.any(~np.isfinite(age)) or np.any(age <= 0):
        raise ValueError(f"Age has to be positive and finite, got {age_months}.")
    return sinusoidal_encoding(age, dim)


class _EncodingMLP(tf.keras.layers.Layer):
    def __init__(
        self,
        encoding_dim: int,
        hidden_dim: int,
        out_dim: int,
        act_layer: str,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.encoding_dim = encoding_dim
        act_layer = act_layer_factory(act_layer)

        kernel_initializer, bias_initializer = conv_initializers()
        self.fc1 = tf.keras.layers.Dense(
            units=hidden_dim,
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="fc1",
        )
        self.act = act_layer()
        kernel_initializer, bias_initializer = conv_initializers()
        self.fc2 = tf.keras.layers.Dense(
            units=out_dim,
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="fc2",
        )

    def call(self, values):
        x = sinusoidal_encoding(values, self.encoding_dim, dtype=self.compute_dtype)
        x = self.fc1(x)
        x = self.act(x)
        x = self.fc2(x)
        return x


class TimeEmbedding(_EncodingMLP):
    """Maps a batch of steps (B,) to (B, embed_dim)."""

    def __init__(self, embed_dim: int, act_layer: str = "swish", **kwargs):
        super().__init__(
            encoding_dim=embed_dim,
            hidden_dim=4 * embed_dim,
            out_dim=embed_dim,
            act_layer=act_layer,
            **kwargs,
        )


class AgeEmbedding(_EncodingMLP):
    """
    Maps a batch of ages (B,) to ``nb_tokens`` tokens, (B, nb_tokens, embed_dim). The
    tokens are keys and values for cross-attention.
    """

    def __init__(
        self, embed_dim: int, nb_tokens: int = 4, act_layer: str = "swish", **kwargs
    ):
        super().__init__(
            encoding_dim=embed_dim,
            hidden_dim=4 * embed_dim,
            out_dim=nb_tokens * embed_dim,
            act_layer=act_layer,
            **kwargs,
        )
        self.embed_dim = embed_dim
        self.nb_tokens = nb_tokens

    def call(self, ages):
        x = super().call(ages)
        return tf.reshape(x, (-1, self.nb_tokens, self.embed_dim))
