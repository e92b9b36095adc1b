"""
Building blocks of 3D denoising U-Nets. Tensors are channels-last, (B, X, Y, Z, C).
"""
import tensorflow as tf

from .factory import act_layer_factory, conv_initializers, norm_layer_factory

__all__ = ["Downsample3D", "OutputHead3D", "ResBlock3D", "Upsample3D"]


class ResBlock3D(tf.keras.layers.Layer):
    """
    Residual block: norm -> act -> conv -> (+ time embedding) -> norm -> act -> conv,
    with a 1x1x1 convolution on the shortcut if the number of channels changes. The
    time embedding is projected to one additive bias per channel.
    """

    def __init__(
        self,
        filters: int,
        norm_layer: str = "group_norm",
        nb_groups: int = 8,
        act_layer: str = "swish",
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.filters = filters
        norm_layer = norm_layer_factory(norm_layer, nb_groups)
        act_layer = act_layer_factory(act_layer)

        self.norm1 = norm_layer(name="norm1")
        self.act1 = act_layer()
        kernel_initializer, bias_initializer = conv_initializers()
        self.conv1 = tf.keras.layers.Conv3D(
            filters=filters,
            kernel_size=3,
            padding="same",
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="conv1",
        )
        kernel_initializer, bias_initializer = conv_initializers()
        self.temb_proj = tf.keras.layers.Dense(
            units=filters,
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="temb_proj",
        )
        self.norm2 = norm_layer(name="norm2")
        self.act2 = act_layer()
        kernel_initializer, bias_initializer = conv_initializers()
        self.conv2 = tf.keras.layers.Conv3D(
            filters=filters,
            kernel_size=3,
            padding="same",
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="conv2",
        )
        self.shortcut = None

    def build(self, input_shape):
        if input_shape[-1] != self.filters:
            kernel_initializer, bias_initializer = conv_initializers()
            self.shortcut = tf.keras.layers.Conv3D(
                filters=self.filters,
                kernel_size=1,
                kernel_initializer=kernel_initializer,
                bias_initializer=bias_initializer,
                name="shortcut",
            )
        super().build(input_shape)

    def call(self, x, temb):
        h = self.norm1(x)
        h = self.act1(h)
        h = self.conv1(h)
        h = h + self.temb_proj(temb)[:, tf.newaxis, tf.newaxis, tf.newaxis, :]
        h = self.norm2(h)
        h = self.act2(h)
        h = self.conv2(h)
        shortcut = self.shortcut(x) if self.shortcut is not None else x
        return h + shortcut


class Downsample3D(tf.keras.layers.Layer):
    """Halves spatial dims by 2x2x2 average pooling."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.pool = tf.keras.layers.AveragePooling3D(pool_size=2, strides=2)

    def call(self, x):
        return self.pool(x)


class Upsample3D(tf.keras.layers.Layer):
    """
    Doubles spatial dims with a stride-2 transposed convolution with kernel 2. Each
    input voxel ``x[i]`` contributes ``kernel[a] * x[i]`` to output ``2 * i + a``.
    """

    def __init__(self, filters: int, use_bias: bool = True, **kwargs):
        super().__init__(**kwargs)
        kernel_initializer, bias_initializer = conv_initializers()
        self.conv = tf.keras.layers.Conv3DTranspose(
            filters=filters,
            kernel_size=2,
            strides=2,
            padding="valid",
            use_bias=use_bias,
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="conv",
        )

    def call(self, x):
        return self.conv(x)


class OutputHead3D(tf.keras.layers.Layer):
    """norm -> act -> conv, with a zero-initialized convolution."""

    def __init__(
        self,
        out_channels: int,
        norm_layer: str = "group_norm",
        nb_groups: int = 8,
        act_layer: str = "swish",
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.norm = norm_layer_factory(norm_layer, nb_groups)(name="norm")
        self.act = act_layer_factory(act_layer)()
        self.conv = tf.keras.layers.Conv3D(
            filters=out_channels,
            kernel_size=3,
            padding="same",
            kernel_initializer="zeros",
            bias_initializer="zeros",
            name="conv",
        )

    def call(self, x):
        x = self.norm(x)
        x = self.act(x)
        return self.conv(x)
