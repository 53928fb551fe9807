from .functional import (channel_attention, conv2d, layer_norm, pixel_shuffle, pixel_unshuffle,
                         softmax_channels, spectral_angle, transposed_conv2d)
from .nn import (NONE, NONNEGATIVE, ChannelAttention, Conv2d, LayerNorm, Module, Parameter, Sequential,
                 named_rng)
from .optim import Adam, AdamState, adam_step
from .tensor import (Tensor, add, as_tensor, backward, concat, leaky_relu, mean, mul, no_grad, relu,
                     sigmoid, sub, tabs, tsum)

__all__ = [
    "Tensor", "backward", "no_grad", "as_tensor", "add", "sub", "mul", "mean", "tsum", "tabs",
    "relu", "leaky_relu", "sigmoid", "concat",
    "conv2d", "transposed_conv2d", "pixel_shuffle", "pixel_unshuffle", "softmax_channels",
    "layer_norm", "channel_attention", "spectral_angle",
    "Module", "Parameter", "Sequential", "Conv2d", "LayerNorm", "ChannelAttention", "named_rng",
    "NONE", "NONNEGATIVE", "Adam", "AdamState", "adam_step",
]
