from .attention import CrossAttention  # noqa: F401
from .blocks import Downsample3D, OutputHead3D, ResBlock3D, Upsample3D  # noqa: F401
from .embedding import (  # noqa: F401
    AgeEmbedding,
    TimeEmbedding,
    embed_age,
    embed_time,
    sinusoidal_encoding,
)
from .factory import (  # noqa: F401
    act_layer_factory,
    conv_initializers,
    norm_layer_factory,
)
from .norm import GroupNormalization, group_normalize  # noqa: F401
from .unet import Decoder3D, Encoder3D  # noqa: F401
