import tensorflow as tf

from .norm import GroupNormalization


def act_layer_factory(act_layer: str):
    """Returns a function that creates the required activation layer."""
    if act_layer in {"linear", "swish", "relu", "gelu", "sigmoid"}:
        return lambda **kwargs: tf.keras.layers.Activation(act_layer, **kwargs)
    else:
        raise ValueError(f"Unknown activation: {act_layer}.")


def norm_layer_factory(norm_layer: str, nb_groups: int = 8):
    """Returns a function that creates a normalization layer"""
    if norm_layer == "":
        return lambda **kwargs: tf.keras.layers.Activation("linear", **kwargs)

    elif norm_layer == "group_norm":
        return lambda **kwargs: GroupNormalization(nb_groups=nb_groups, **kwargs)

    elif norm_layer == "layer_norm":
        bn_class = tf.keras.layers.LayerNormalization
        bn_args = {"epsilon": 1e-5}
        return lambda **kwargs: bn_class(**bn_args, **kwargs)

    else:
        raise ValueError(f"Unknown normalization layer: {norm_layer}")


def conv_initializers():
    """
    Initializers for convolutions and dense layers: fan-in scaled uniform kernels and
    zero biases. Returns fresh instances on each call, since Keras initializers must
    not be shared between weights.
    """
    kernel_initializer = tf.keras.initializers.VarianceScaling(
        scale=1.0, mode="fan_in", distribution="uniform"
    )
    bias_initializer = tf.keras.initializers.Zeros()
    return kernel_initializer, bias_initializer
