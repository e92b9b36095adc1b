"""
Encoder and decoder halves of a 3D U-Net. Each encoder level is a residual block
followed by average pooling, so an encoder with 4 levels reduces spatial dims by 16.
The decoder mirrors the encoder: transposed-convolution upsampling, concatenation with
the skip features of the level, residual block.
"""
from typing import List, Sequence, Tuple

import tensorflow as tf

from .blocks import Downsample3D, ResBlock3D, Upsample3D
from .factory import conv_initializers

__all__ = ["Decoder3D", "Encoder3D"]


class Encoder3D(tf.keras.layers.Layer):
    def __init__(
        self,
        channels: Sequence[int],
        norm_layer: str = "group_norm",
        nb_groups: int = 8,
        act_layer: str = "swish",
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.channels = tuple(channels)
        kernel_initializer, bias_initializer = conv_initializers()
        self.stem = tf.keras.layers.Conv3D(
            filters=self.channels[0],
            kernel_size=3,
            padding="same",
            kernel_initializer=kernel_initializer,
            bias_initializer=bias_initializer,
            name="stem",
        )
        self.blocks = [
            ResBlock3D(
                filters=c,
                norm_layer=norm_layer,
                nb_groups=nb_groups,
                act_layer=act_layer,
                name=f"blocks/{j}",
            )
            for j, c in enumerate(self.channels)
        ]
        self.down = [Downsample3D(name=f"down/{j}") for j in range(len(self.channels))]

    def call(self, x, temb) -> Tuple[tf.Tensor, List[tf.Tensor]]:
        """
        Returns the bottleneck features and the skip features of each level, taken
        before pooling.
        """
        x = self.stem(x)
        skips = []
        for block, down in zip(self.blocks, self.down):
            x = block(x, temb)
            skips.append(x)
            x = down(x)
        return x, skips


class Decoder3D(tf.keras.layers.Layer):
    def __init__(
        self,
        channels: Sequence[int],
        norm_layer: str = "group_norm",
        nb_groups: int = 8,
        act_layer: str = "swish",
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.channels = tuple(channels)
        self.up = [
            Upsample3D(filters=c, name=f"up/{j}") for j, c in enumerate(self.channels)
        ]
        self.blocks = [
            ResBlock3D(
                filters=c,
                norm_layer=norm_layer,
                nb_groups=nb_groups,
                act_layer=act_layer,
                name=f"blocks/{j}",
            )
            for j, c in enumerate(self.channels)
        ]

    def call(self, x, skips: Sequence[Sequence[tf.Tensor]], temb):
        """
        Args:
            x: Bottleneck features.
            skips: For each level, from the finest to the coarsest, the list of
                tensors concatenated after upsampling.
            temb: Time embedding, (B, D).
        """
        if len(skips) != len(self.channels):
            raise ValueError(
                f"Expected skips for {len(self.channels)} levels, got {len(skips)}."
            )
        for j in reversed(range(len(self.channels))):
            x = self.up[j](x)
            x = tf.concat([x, *skips[j]], axis=-1)
            x = self.blocks[j](x, temb)
        return x
