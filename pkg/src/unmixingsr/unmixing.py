"""Unsupervised unmixing autoencoder and its hybrid reconstruction objective."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .engine import (NONNEGATIVE, Conv2d, Module, Sequential, Tensor, as_tensor, no_grad,
                     softmax_channels, spectral_angle, tabs)
from .errors import ConfigurationError
from .gram import Gram, GramConfig
from .hsi import AbundanceMap, EndmemberMatrix, HsiCube

ALPHA = 0.1
BETA_TV = 1e-3


@dataclass(frozen=True)
class UnmixingConfig:
    bands: int
    p: int
    width: int = 32
    grams: int = 2
    kernel_size: int = 1
    reduction: int = 4

    def __post_init__(self):
        if self.bands < 2 or self.p < 2 or self.grams < 0:
            raise ConfigurationError(f"invalid unmixing config {self}")

    def to_dict(self) -> dict:
        return asdict(self)


class UnmixingNetwork(Module):
    """Encoder: conv(B->C), GRAMs, conv(C->p), channel softmax.
    Decoder: bias-free nonnegative 1×1 conv(p->B) whose weights are the endmembers.
    """

    kind = "unmixing"

    def __init__(self, config: UnmixingConfig, seed: int = 0):
        super().__init__()
        self.config = config
        gcfg = GramConfig(config.width, config.kernel_size, config.reduction)
        self.encoder_in = Conv2d(config.bands, config.width, config.kernel_size)
        self.encoder_grams = Sequential(*(Gram(gcfg) for _ in range(config.grams)))
        self.encoder_out = Conv2d(config.width, config.p, config.kernel_size)
        self.decoder = Conv2d(config.p, config.bands, 1, bias=False, init="uniform", constraint=NONNEGATIVE)
        self.initialize(seed)

    def encode(self, y: Tensor) -> Tensor:
        y = as_tensor(y)
        if y.shape[0] != self.config.bands:
            raise ConfigurationError(f"network expects {self.config.bands} bands, input has {y.shape[0]}")
        return softmax_channels(self.encoder_out(self.encoder_grams(self.encoder_in(y))))

    def decode(self, a: Tensor) -> Tensor:
        return self.decoder(as_tensor(a))

    def forward(self, y: Tensor) -> tuple[Tensor, Tensor]:
        a = self.encode(y)
        return a, self.decode(a)

    @property
    def endmember_weights(self) -> Tensor:
        """Decoder weight as a differentiable p×B tensor."""
        w = self.decoder.weight
        return w.reshape(self.config.bands, self.config.p).transpose(1, 0)

    def unmix(self, cube: HsiCube) -> tuple[AbundanceMap, HsiCube]:
        with no_grad():
            a, yhat = self.forward(Tensor(cube.data))
        return AbundanceMap(a.value), HsiCube(yhat.value)

    def extract_endmembers(self) -> EndmemberMatrix:
        return EndmemberMatrix(self.decoder.weight.value[:, :, 0, 0].T.copy())


def unloss_l1(y, yhat) -> Tensor:
    """Mean absolute reconstruction error over all entries."""
    y, yhat = as_tensor(y), as_tensor(yhat)
    if y.shape != yhat.shape:
        raise ConfigurationError(f"shape mismatch {y.shape} vs {yhat.shape}")
    return tabs(y - yhat).mean()


def unloss_sad(y, yhat) -> Tensor:
    """Mean per-pixel spectral angle in radians; zero-norm pixels count as 0."""
    return spectral_angle(as_tensor(y), as_tensor(yhat)).mean()


def unloss_tv(endmembers) -> Tensor:
    """Mean absolute difference between adjacent bands of every endmember row (p×B)."""
    m = as_tensor(endmembers)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ConfigurationError(f"need a p×B matrix with B >= 2, got {m.shape}")
    return tabs(m[:, 1:] - m[:, :-1]).mean()


def combine_unloss(l1, sad, tv, alpha: float = ALPHA, beta_tv: float = BETA_TV):
    return l1 + alpha * sad + beta_tv * tv


def unloss_total(y, yhat, endmembers, alpha: float = ALPHA, beta_tv: float = BETA_TV) -> Tensor:
    return combine_unloss(unloss_l1(y, yhat), unloss_sad(y, yhat), unloss_tv(endmembers), alpha, beta_tv)


def unloss_terms(net: UnmixingNetwork, y: Tensor, alpha: float = ALPHA, beta_tv: float = BETA_TV
                 ) -> dict[str, Tensor]:
    """Forward pass plus every loss term, keyed for logging."""
    a, yhat = net(y)
    l1, sad, tv = unloss_l1(y, yhat), unloss_sad(y, yhat), unloss_tv(net.endmember_weights)
    return {"total": combine_unloss(l1, sad, tv, alpha, beta_tv), "l1": l1, "sad": sad, "aux": tv,
            "abundances": a, "reconstruction": yhat}


def reconstruction_rmse(y: np.ndarray, yhat: np.ndarray) -> float:
    return float(np.sqrt(np.mean((y - yhat) ** 2)))
