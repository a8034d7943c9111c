"""Layer stacks for the two players.

Point data (2-D mixtures) uses MLPs with `layers` hidden layers of equal
width; 28x28-style images use a conv discriminator and a transposed-conv
generator in DCGAN fashion.  The two image stacks each hold `blocks` conv
layers: two stride-2 blocks that halve (or double) the spatial size, with
size-preserving 3x3 stride-1 blocks between them.  Batch normalization is
inserted only when `batchnorm=True`.
"""

from typing import List, Tuple

from ..errors import ConfigurationError
from ..nn import (
    ActivationSpec,
    BatchNormSpec,
    ConvSpec,
    ConvTransposeSpec,
    DenseSpec,
    LayerSpec,
    ReshapeSpec,
)

__all__ = [
    "point_generator",
    "point_discriminator",
    "image_generator",
    "image_discriminator",
]


def point_generator(
    latent_dim: int,
    hidden: int,
    out_dim: int = 2,
    output: str = "identity",
    batchnorm: bool = False,
    layers: int = 3,
) -> List[LayerSpec]:
    specs: List[LayerSpec] = []
    fan_in = latent_dim
    for _ in range(layers):
        specs.append(DenseSpec(fan_in, hidden))
        if batchnorm:
            specs.append(BatchNormSpec(hidden))
        specs.append(ActivationSpec("relu"))
        fan_in = hidden
    specs += [DenseSpec(hidden, out_dim), ActivationSpec(output)]  # type: ignore[arg-type]
    return specs


def point_discriminator(
    in_dim: int, hidden: int, batchnorm: bool = False, layers: int = 3
) -> List[LayerSpec]:
    # no batchnorm on the input layer
    specs: List[LayerSpec] = [DenseSpec(in_dim, hidden), ActivationSpec("leaky_relu")]
    for _ in range(layers - 1):
        specs.append(DenseSpec(hidden, hidden))
        if batchnorm:
            specs.append(BatchNormSpec(hidden))
        specs.append(ActivationSpec("leaky_relu"))
    specs += [DenseSpec(hidden, 1), ActivationSpec("sigmoid")]
    return specs


def _quarter(item_shape: Tuple[int, ...]) -> Tuple[int, int, int]:
    if len(item_shape) != 3:
        raise ConfigurationError(f"image items must be (C, H, W), got {item_shape}")
    c, h, w = item_shape
    if h % 4 or w % 4:
        raise ConfigurationError(f"image height and width must be multiples of 4, got {h}x{w}")
    return c, h // 4, w // 4


def _check_blocks(blocks: int) -> None:
    if blocks < 2:
        raise ConfigurationError(
            f"image networks need at least 2 conv blocks, got {blocks}", key="conv_blocks"
        )


def image_generator(
    latent_dim: int,
    base_channels: int,
    item_shape: Tuple[int, ...],
    output: str = "tanh",
    batchnorm: bool = False,
    blocks: int = 5,
) -> List[LayerSpec]:
    _check_blocks(blocks)
    c, h, w = _quarter(item_shape)
    wide = 2 * base_channels
    specs: List[LayerSpec] = [DenseSpec(latent_dim, wide * h * w)]
    if batchnorm:
        specs.append(BatchNormSpec(wide * h * w))
    specs += [ActivationSpec("relu"), ReshapeSpec((wide, h, w)), ConvTransposeSpec(wide, base_channels)]
    if batchnorm:
        specs.append(BatchNormSpec(base_channels))
    specs.append(ActivationSpec("relu"))
    for _ in range(blocks - 2):
        specs.append(ConvTransposeSpec(base_channels, base_channels, kernel=3, stride=1, padding=1))
        if batchnorm:
            specs.append(BatchNormSpec(base_channels))
        specs.append(ActivationSpec("relu"))
    specs += [
        ConvTransposeSpec(base_channels, c),
        ActivationSpec(output),  # type: ignore[arg-type]
    ]
    return specs


def image_discriminator(
    base_channels: int,
    item_shape: Tuple[int, ...],
    batchnorm: bool = False,
    blocks: int = 5,
) -> List[LayerSpec]:
    _check_blocks(blocks)
    c, h, w = _quarter(item_shape)
    wide = 2 * base_channels
    specs: List[LayerSpec] = [ConvSpec(c, base_channels), ActivationSpec("leaky_relu")]
    for _ in range(blocks - 2):
        specs.append(ConvSpec(base_channels, base_channels, kernel=3, stride=1, padding=1))
        if batchnorm:
            specs.append(BatchNormSpec(base_channels))
        specs.append(ActivationSpec("leaky_relu"))
    specs.append(ConvSpec(base_channels, wide))
    if batchnorm:
        specs.append(BatchNormSpec(wide))
    specs += [
        ActivationSpec("leaky_relu"),
        ReshapeSpec((wide * h * w,)),
        DenseSpec(wide * h * w, 1),
        ActivationSpec("sigmoid"),
    ]
    return specs
