"""General residual attention module shared by the unmixing and SR networks."""
from __future__ import annotations

from dataclasses import dataclass

from .engine import ChannelAttention, Conv2d, LayerNorm, Module, Tensor, leaky_relu, relu
from .errors import ConfigurationError


@dataclass(frozen=True)
class GramConfig:
    channels: int
    kernel_size: int = 3
    reduction: int = 4
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.channels < 1 or self.channels % self.reduction:
            raise ConfigurationError(f"channels {self.channels} must be a positive multiple of {self.reduction}")
        if self.kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {self.kernel_size}")


class Gram(Module):
    """Spectral residual block followed by a spatial residual block.

    spectral: LayerNorm -> conv -> LeakyReLU -> channel attention, added to x
    spatial:  LayerNorm -> conv -> ReLU -> conv, added to the spectral output
    """

    def __init__(self, config: GramConfig):
        super().__init__()
        self.config = config
        c, k = config.channels, config.kernel_size
        self.spectral_norm = LayerNorm(c)
        self.spectral_conv = Conv2d(c, c, k)
        self.attention = ChannelAttention(c, config.reduction)
        self.spatial_norm = LayerNorm(c)
        self.spatial_conv1 = Conv2d(c, c, k)
        self.spatial_conv2 = Conv2d(c, c, k)

    def spectral_branch(self, x: Tensor) -> Tensor:
        h = leaky_relu(self.spectral_conv(self.spectral_norm(x)), self.config.leaky_slope)
        return self.attention(h)

    def spatial_branch(self, x: Tensor) -> Tensor:
        return self.spatial_conv2(relu(self.spatial_conv1(self.spatial_norm(x))))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.config.channels:
            raise ConfigurationError(f"GRAM expects {self.config.channels} channels, got {x.shape[0]}")
        x1 = x + self.spectral_branch(x)
        return x1 + self.spatial_branch(x1)


def gram_forward(block: Gram, x: Tensor) -> Tensor:
    return block(x)
