import tensorflow as tf

from .factory import norm_layer_factory

__all__ = ["CrossAttention"]


class CrossAttention(tf.keras.layers.Layer):
    """
    Volume features attend over a small set of context tokens.

    Queries are the flattened, normalized features (B, X*Y*Z, C), keys and values are
    the context tokens (B, N, D). The attention output is projected back to C channels
    and added onto the features.

    Args:
        nb_heads: Number of attention heads.
        norm_layer: Normalization applied to the features before attention.
        nb_groups: Groups for group normalization.
    """

    def __init__(
        self,
        nb_heads: int,
        norm_layer: str = "group_norm",
        nb_groups: int = 8,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.nb_heads = nb_heads
        self.norm = norm_layer_factory(norm_layer, nb_groups)(name="norm")
        self.attn = None

    def build(self, input_shape):
        channels = input_shape[-1]
        self.attn = tf.keras.layers.MultiHeadAttention(
            num_heads=self.nb_heads,
            key_dim=max(channels // self.nb_heads, 1),
            output_shape=channels,
            name="attn",
        )
        super().build(input_shape)

    def call(self, x, context, return_scores: bool = False):
        shape = tf.shape(x)
        channels = x.shape[-1]
        h = self.norm(x)
        h = tf.reshape(h, (shape[0], -1, channels))
        h, scores = self.attn(
            query=h, value=context, key=context, return_attention_scores=True
        )
        h = tf.reshape(h, shape)
        x = x + h
        return (x, scores) if return_scores else x
