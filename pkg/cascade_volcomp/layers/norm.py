"""
Group normalization for N..C tensors. Used with 3D volumes, i.e., NXYZC tensors.
"""
import math

import tensorflow as tf


def group_normalize(x, gamma, beta, nb_groups, eps=1e-5):
    """
    Applies group-normalization to N..C ``x`` (see abs/1803.08494).

    This function just does the math, see :class:`GroupNormalization` for the layer
    that creates the variables.

    Args:
        x: N..C-tensor, e.g., NXYZC for volumes. Normalization is over everything
            between N and C and over the channels in each group.
        gamma: tensor with C entries, learnable scale after normalization.
        beta: tensor with C entries, learnable bias after normalization.
        nb_groups: int, number of groups to normalize over (divides C).
        eps: float, a small additive constant to avoid /sqrt(0).

    Returns:
        Group-normalized `x`, of the same shape and type as `x`.
    """
    if x.shape.rank < 2:
        raise ValueError("GroupNorm needs at least a 2-dim tensor.")
    nb_channels = x.shape[-1]
    if nb_channels is None:
        raise ValueError("Cannot apply GroupNorm on dynamic channels.")
    if nb_channels % nb_groups != 0:
        raise ValueError(f"GroupNorm: {nb_channels} not divisible by {nb_groups}.")

    orig_shape = tf.shape(x)

    # This shape is N..GS where G is #groups and S is group-size.
    extra_shape = [nb_groups, nb_channels // nb_groups]
    group_shape = tf.concat([orig_shape[:-1], extra_shape], axis=-1)
    x = tf.reshape(x, group_shape)

    # Normalize over all dimensions except N (first) and G (next-to-last).
    normdims = list(range(1, x.shape.rank - 2)) + [x.shape.rank - 1]
    mean, var = tf.nn.moments(x, normdims, keepdims=True)

    # One beta/gamma per channel, reshaped to broadcast over groups.
    beta = tf.reshape(beta, extra_shape)
    gamma = tf.reshape(gamma, extra_shape)
    x = tf.nn.batch_normalization(x, mean, var, beta, gamma, eps)
    return tf.reshape(x, orig_shape)


class GroupNormalization(tf.keras.layers.Layer):
    """
    A group-norm layer.

    If the number of channels is not divisible by ``nb_groups``, we use the largest
    common divisor instead, so narrow test configurations keep working.

    Args:
        nb_groups: int, the number of channel-groups to normalize over.
        eps: float, a small additive constant to avoid /sqrt(0).
        **kwargs: other tf.keras.layers.Layer arguments.
    """

    def __init__(self, nb_groups: int = 8, eps: float = 1e-5, **kwargs):
        super().__init__(**kwargs)
        self.nb_groups = nb_groups
        self.eps = eps
        self._groups = None

    def build(self, input_shape):
        channels = input_shape[-1]
        if channels is None:
            raise ValueError("Cannot apply GroupNorm on dynamic channels.")
        self._groups = math.gcd(self.nb_groups, channels)
        self.gamma = self.add_weight(
            name="gamma",
            shape=(channels,),
            initializer=tf.ones_initializer(),
            dtype=self.dtype,
        )
        self.beta = self.add_weight(
            name="beta",
            shape=(channels,),
            initializer=tf.zeros_initializer(),
            dtype=self.dtype,
        )
        super().build(input_shape)

    def call(self, x):
        return group_normalize(x, self.gamma, self.beta, self._groups, self.eps)

    def get_config(self):
        config = super().get_config()
        config.update({"nb_groups": self.nb_groups, "eps": self.eps})
        return config
