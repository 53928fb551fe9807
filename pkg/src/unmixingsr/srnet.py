"""Primary super-resolution network, material-aware fusion and the SR objective."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .engine import (Conv2d, Module, Parameter, Sequential, Tensor, as_tensor, concat, no_grad,
                     pixel_shuffle, spectral_angle, tabs, transposed_conv2d)
from .errors import ConfigurationError
from .gram import Gram, GramConfig
from .hsi import AbundanceMap, HsiCube, bicubic_upsample, replicate_upsample

ALPHA = 0.1
BETA_AB = 0.2
DECONV_MODES = ("replicate", "learned")


@dataclass(frozen=True)
class SrConfig:
    bands: int
    p: int
    scale: int = 4
    width: int = 64
    grams: int = 9
    kernel_size: int = 3
    reduction: int = 4
    mam_enabled: bool = True
    deconv_mode: str = "replicate"

    def __post_init__(self):
        if self.scale < 2 or self.scale % 2:
            raise ConfigurationError(f"progressive upsampling needs an even scale >= 2, got {self.scale}")
        if self.grams < 1 or self.width < 1 or self.bands < 1 or self.p < 1:
            raise ConfigurationError(f"invalid SR config {self}")
        if self.deconv_mode not in DECONV_MODES:
            raise ConfigurationError(f"deconv_mode must be one of {DECONV_MODES}, got {self.deconv_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def mam_fuse(features: Tensor, abundances, fusion: Conv2d | None) -> Tensor:
    """Residual fusion of abundance maps into features; identity when ``fusion`` is None."""
    if fusion is None:
        return features
    a = as_tensor(abundances)
    if a.shape[1:] != features.shape[1:]:
        raise ConfigurationError(f"abundances {a.shape[1:]} and features {features.shape[1:]} differ spatially")
    return features + fusion(concat([features, a], axis=0))


class SrNetwork(Module):
    """head conv -> GRAM trunk (+ trunk residual) -> ×(n/2) stage -> MAM -> ×2 stage -> tail,
    plus a bicubic global residual.
    """

    kind = "sr"

    def __init__(self, config: SrConfig, seed: int = 0):
        super().__init__()
        self.config = config
        c, k, n = config.width, config.kernel_size, config.scale
        gcfg = GramConfig(c, k, config.reduction)
        self.head = Conv2d(config.bands, c, k)
        self.trunk = Sequential(*(Gram(gcfg) for _ in range(config.grams)))
        self.up1 = Conv2d(c, c * (n // 2) ** 2, k) if n > 2 else None
        self.mam = Conv2d(c + config.p, c, 1, init="zeros") if config.mam_enabled else None
        self.up2 = Conv2d(c, c * 4, k)
        self.tail = Conv2d(c, config.bands, k, init="zeros")
        if config.deconv_mode == "learned":
            self.deconv = Parameter((config.p, config.p, n, n), "zeros")
        self.initialize(seed)

    def initialize(self, seed: int) -> None:
        super().initialize(seed)
        if self.config.deconv_mode == "learned":
            # start from block replication
            self.deconv.value = np.einsum("co,ab->coab", np.eye(self.config.p),
                                          np.ones((self.config.scale,) * 2))

    def forward(self, y_lr, a_lr=None) -> Tensor:
        y = as_tensor(y_lr)
        n = self.config.scale
        if y.shape[0] != self.config.bands:
            raise ConfigurationError(f"network expects {self.config.bands} bands, input has {y.shape[0]}")
        f0 = self.head(y)
        x = f0 + self.trunk(f0)
        if self.up1 is not None:
            x = pixel_shuffle(self.up1(x), n // 2)
        if self.mam is not None:
            if a_lr is None:
                raise ConfigurationError("MAM is enabled but no LR abundances were given")
            a = as_tensor(a_lr)
            if a.shape[1:] != y.shape[1:] or a.shape[0] != self.config.p:
                raise ConfigurationError(
                    f"LR abundances {a.shape} do not match p={self.config.p} and input {y.shape[1:]}")
            if n > 2:
                a = Tensor(replicate_upsample(a.value, n // 2))
            x = mam_fuse(x, a, self.mam)
        x = pixel_shuffle(self.up2(x), 2)
        return self.tail(x) + Tensor(bicubic_upsample(y.value, n))

    def super_resolve(self, y_lr: HsiCube, a_lr: AbundanceMap | None = None) -> HsiCube:
        with no_grad():
            out = self.forward(Tensor(y_lr.data), None if a_lr is None else Tensor(a_lr.data))
        return HsiCube(out.value)

    def deconv_kernel(self) -> Tensor | None:
        return self.deconv if self.config.deconv_mode == "learned" else None


def deconv_abundance(a_lr, n: int, kernel: Tensor | None = None):
    """Lift LR abundances to the HR grid.

    With no kernel every LR pixel is copied into its n×n block; otherwise a
    stride-n transposed convolution with ``kernel`` (p×p×n×n) is applied.
    Accepts an AbundanceMap (returns one) or a tensor/array (returns a Tensor).
    """
    if n < 1:
        raise ConfigurationError(f"scale must be >= 1, got {n}")
    if isinstance(a_lr, AbundanceMap):
        if kernel is not None:
            return AbundanceMap(transposed_conv2d(Tensor(a_lr.data), kernel, n).value)
        return AbundanceMap(replicate_upsample(a_lr.data, n))
    a = as_tensor(a_lr)
    if kernel is not None:
        return transposed_conv2d(a, kernel, n)
    if a.requires_grad:
        raise ConfigurationError("replicate deconvolution expects constant LR abundances")
    return Tensor(replicate_upsample(a.value, n))


def abun_loss(a_sr, a_lr, n: int, kernel: Tensor | None = None) -> Tensor:
    """Mean absolute difference between HR abundances and lifted LR abundances."""
    a_sr = a_sr.data if isinstance(a_sr, AbundanceMap) else a_sr
    a_lr = a_lr.data if isinstance(a_lr, AbundanceMap) else a_lr
    a_sr, a_lr = as_tensor(a_sr), as_tensor(a_lr)
    if a_sr.shape[0] != a_lr.shape[0] or a_sr.shape[1:] != (n * a_lr.shape[1], n * a_lr.shape[2]):
        raise ConfigurationError(f"A_SR {a_sr.shape} is not {n}× A_LR {a_lr.shape}")
    return tabs(a_sr - deconv_abundance(a_lr, n, kernel)).mean()


def sr_loss_l1(y_hr, y_sr) -> Tensor:
    y_hr, y_sr = as_tensor(y_hr), as_tensor(y_sr)
    if y_hr.shape != y_sr.shape:
        raise ConfigurationError(f"shape mismatch {y_hr.shape} vs {y_sr.shape}")
    return tabs(y_hr - y_sr).mean()


def sr_loss_sad(y_hr, y_sr) -> Tensor:
    return spectral_angle(as_tensor(y_hr), as_tensor(y_sr)).mean()


def combine_sr_loss(l1, sad, abun, alpha: float = ALPHA, beta_ab: float = BETA_AB):
    return l1 + alpha * sad + beta_ab * abun


def sr_loss_total(y_hr, y_sr, a_sr, a_lr, n: int | None = None, alpha: float = ALPHA,
                  beta_ab: float = BETA_AB, kernel: Tensor | None = None) -> Tensor:
    """L1 + alpha·SAD + beta_ab·AbunLoss. ``n`` defaults to the HR/LR abundance size ratio."""
    a_sr_t = as_tensor(a_sr.data if isinstance(a_sr, AbundanceMap) else a_sr)
    a_lr_t = as_tensor(a_lr.data if isinstance(a_lr, AbundanceMap) else a_lr)
    if n is None:
        n = a_sr_t.shape[1] // a_lr_t.shape[1]
    return combine_sr_loss(sr_loss_l1(y_hr, y_sr), sr_loss_sad(y_hr, y_sr),
                           abun_loss(a_sr_t, a_lr_t, n, kernel), alpha, beta_ab)
