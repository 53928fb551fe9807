"""Parameters, a small module tree, and the layers both networks are built from."""
from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from ..errors import ConfigurationError
from .functional import channel_attention, conv2d, layer_norm
from .tensor import Tensor

NONE = "none"
NONNEGATIVE = "nonnegative"


def named_rng(seed: int, name: str) -> np.random.Generator:
    """A PCG64 stream keyed by (seed, name); independent of creation order."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype="<u4").tolist()
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *words])))


class Parameter(Tensor):
    """A trainable leaf tensor with an initializer tag and an optional constraint."""

    def __init__(self, shape, init: str = "zeros", constraint: str = NONE, trainable: bool = True):
        super().__init__(np.zeros(shape), requires_grad=trainable)
        if constraint not in (NONE, NONNEGATIVE):
            raise ConfigurationError(f"unknown constraint {constraint!r}")
        self.init = init
        self.constraint = constraint
        self.name = ""

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self.requires_grad = bool(flag)

    def initialize(self, rng: np.random.Generator) -> None:
        shape = self.value.shape
        if self.init == "zeros":
            value = np.zeros(shape)
        elif self.init == "ones":
            value = np.ones(shape)
        elif self.init == "he":
            fan_in = int(np.prod(shape[1:]))
            value = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif self.init == "uniform":
            value = rng.uniform(0.0, 1.0, size=shape)
        else:
            raise ConfigurationError(f"unknown initializer {self.init!r}")
        self.value = value
        self.project()

    def project(self) -> None:
        if self.constraint == NONNEGATIVE:
            np.maximum(self.value, 0.0, out=self.value)


class Module:
    """Container tracking child modules and parameters in assignment order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, p in self._params.items():
            name = f"{prefix}{key}"
            p.name = name
            yield name, p
        for key, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ConfigurationError(f"parameter mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ConfigurationError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.value = value.copy()

    def initialize(self, seed: int) -> None:
        for name, p in self.named_parameters():
            p.initialize(named_rng(seed, name))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.parameters():
            p.trainable = False

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    """k×k convolution with 'same' zero padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 bias: bool = True, init: str = "he", constraint: str = NONE):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {kernel_size}")
        self.in_channels, self.out_channels, self.kernel_size = in_channels, out_channels, kernel_size
        self.weight = Parameter((out_channels, in_channels, kernel_size, kernel_size), init, constraint)
        self.bias = Parameter((out_channels,), "zeros") if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.kernel_size // 2)


class LayerNorm(Module):
    def __init__(self, channels: int):
        super().__init__()
        self.gain = Parameter((channels,), "ones")
        self.offset = Parameter((channels,), "zeros")

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.offset)


class ChannelAttention(Module):
    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if reduction < 1 or channels % reduction:
            raise ConfigurationError(f"channels {channels} not divisible by reduction {reduction}")
        hidden = channels // reduction
        self.down = Conv2d(channels, hidden, 1)
        self.up = Conv2d(hidden, channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        return channel_attention(x, self.down.weight, self.down.bias, self.up.weight, self.up.bias)


class Sequential(Module):
    """Children applied in order; parameter names use the child index."""

    def __init__(self, *modules: Module):
        super().__init__()
        for i, m in enumerate(modules):
            setattr(self, str(i), m)

    def __len__(self) -> int:
        return len(self._children)

    def __iter__(self):
        return iter(self._children.values())

    def __getitem__(self, i: int) -> Module:
        return self._children[str(i)]

    def forward(self, x):
        for m in self._children.values():
            x = m(x)
        return x
