"""Differentiable image primitives on C×H×W tensors (no batch axis)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError
from .tensor import Tensor, as_tensor, make_node, mean, relu, sigmoid

LAYER_NORM_EPS = 1e-6


def _im2col(xp: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Patches of a padded C×Hp×Wp array as a (C·k·k)×(Ho·Wo) matrix."""
    c = xp.shape[0]
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    return cols, ho, wo


def _col2im(cols: np.ndarray, c: int, k: int, ho: int, wo: int,
            hp: int, wp: int, stride: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patch columns into C×Hp×Wp."""
    cols = cols.reshape(c, k, k, ho, wo)
    out = np.zeros((c, hp, wp))
    for i in range(k):
        for j in range(k):
            out[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[:, i, j]
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, padding: int = 0) -> Tensor:
    """Cross-correlation of a C×H×W input with an O×C×k×k kernel, stride 1, zero padding."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ConfigurationError(f"conv2d expects C×H×W input and O×C×k×k kernel, got {x.shape}, {kernel.shape}")
    o, c, k, k2 = kernel.shape
    if c != x.shape[0]:
        raise ConfigurationError(f"kernel expects {c} input channels, input has {x.shape[0]}")
    if k != k2 or k % 2 == 0:
        raise ConfigurationError(f"kernel must be square with odd size, got {k}×{k2}")
    if padding < 0:
        raise ConfigurationError("padding must be >= 0")
    h, w = x.shape[1:]
    if h + 2 * padding - k + 1 < 1 or w + 2 * padding - k + 1 < 1:
        raise ConfigurationError(f"input {h}×{w} too small for kernel {k} with padding {padding}")

    xp = np.pad(x.value, ((0, 0), (padding, padding), (padding, padding))) if padding else x.value
    cols, ho, wo = _im2col(xp, k, 1)
    wmat = kernel.value.reshape(o, c * k * k)
    out = wmat @ cols
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.value[:, None]
    out = out.reshape(o, ho, wo)
    hp, wp = xp.shape[1:]

    def bw(g):
        gf = g.reshape(o, ho * wo)
        gx = gk = gb = None
        if x.requires_grad:
            gxp = _col2im(wmat.T @ gf, c, k, ho, wo, hp, wp, 1)
            gx = gxp[:, padding:hp - padding, padding:wp - padding] if padding else gxp
        if kernel.requires_grad:
            gk = (gf @ cols.T).reshape(kernel.shape)
        if bias is not None and bias.requires_grad:
            gb = gf.sum(axis=1)
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_node(out, parents, bw)


def transposed_conv2d(x: Tensor, kernel: Tensor, stride: int = 1, bias: Tensor | None = None) -> Tensor:
    """Adjoint of a strided convolution; C×H×W input, C×O×k×k kernel, no padding.

    The output is O×((H−1)·stride+k)×((W−1)·stride+k), i.e. O×rH×rW when k == stride.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    c, o, k, k2 = kernel.shape
    if c != x.shape[0] or k != k2:
        raise ConfigurationError(f"kernel {kernel.shape} incompatible with input {x.shape}")
    h, w = x.shape[1:]
    ho, wo = (h - 1) * stride + k, (w - 1) * stride + k
    kmat = kernel.value.reshape(c, o * k * k)
    xf = x.value.reshape(c, h * w)
    out = _col2im(kmat.T @ xf, o, k, h, w, ho, wo, stride)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.value[:, None, None]

    def bw(g):
        gcols, _, _ = _im2col(g, k, stride)
        gx = (kmat @ gcols).reshape(x.shape) if x.requires_grad else None
        gk = (xf @ gcols.T).reshape(kernel.shape) if kernel.requires_grad else None
        gb = g.sum(axis=(1, 2)) if bias is not None and bias.requires_grad else None
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_node(out, parents, bw)


def _shuffle(v: np.ndarray, r: int) -> np.ndarray:
    cr2, h, w = v.shape
    c = cr2 // (r * r)
    return v.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * r, w * r)


def _unshuffle(v: np.ndarray, r: int) -> np.ndarray:
    c, hr, wr = v.shape
    h, w = hr // r, wr // r
    return v.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (C·r²)×H×W into C×rH×rW; channel c·r²+i·r+j lands at offset (i, j)."""
    x = as_tensor(x)
    if r < 1 or x.shape[0] % (r * r):
        raise ConfigurationError(f"{x.shape[0]} channels not divisible by r²={r * r}")
    return make_node(_shuffle(x.value, r), (x,), lambda g: (_unshuffle(g, r),))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    x = as_tensor(x)
    if r < 1 or x.shape[1] % r or x.shape[2] % r:
        raise ConfigurationError(f"spatial dims {x.shape[1:]} not divisible by {r}")
    return make_node(_unshuffle(x.value, r), (x,), lambda g: (_shuffle(g, r),))


def softmax_channels(x: Tensor) -> Tensor:
    """Softmax over axis 0 at every spatial location."""
    x = as_tensor(x)
    z = x.value - x.value.max(axis=0, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=0, keepdims=True)
    return make_node(s, (x,), lambda g: (s * (g - (g * s).sum(axis=0, keepdims=True)),))


def layer_norm(x: Tensor, gain: Tensor, offset: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Standardize across channels at every pixel, then apply a per-channel affine map."""
    x, gain, offset = as_tensor(x), as_tensor(gain), as_tensor(offset)
    mu = x.value.mean(axis=0, keepdims=True)
    xc = x.value - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=0, keepdims=True) + eps)
    xhat = xc * inv_std
    gv = gain.value[:, None, None]
    out = gv * xhat + offset.value[:, None, None]

    def bw(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gv
            gx = inv_std * (dxhat - dxhat.mean(axis=0, keepdims=True)
                            - xhat * (dxhat * xhat).mean(axis=0, keepdims=True))
        return gx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return make_node(out, (x, gain, offset), bw)


def channel_attention(x: Tensor, w_down: Tensor, b_down: Tensor,
                      w_up: Tensor, b_up: Tensor) -> Tensor:
    """Squeeze-excite gating: pool -> 1×1 conv -> ReLU -> 1×1 conv -> sigmoid -> rescale.

    ``w_down`` is (C/r)×C×1×1 and ``w_up`` is C×(C/r)×1×1.
    """
    squeezed = mean(x, axis=(1, 2), keepdims=True)
    hidden = relu(conv2d(squeezed, w_down, b_down))
    weights = sigmoid(conv2d(hidden, w_up, b_up))
    return x * weights


def spectral_angle(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel angle (radians) between the channel vectors of two C×H×W tensors.

    The cosine is clamped to [-1, 1]. A pixel where either spectrum has zero norm
    contributes angle 0. The derivative is taken as 0 wherever the cosine
    reaches ±1 or a norm vanishes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    dot = (av * bv).sum(axis=0)
    na2 = (av * av).sum(axis=0)
    nb2 = (bv * bv).sum(axis=0)
    denom = np.sqrt(na2 * nb2)
    valid = denom > 0
    safe = np.where(valid, denom, 1.0)
    cos = np.clip(np.where(valid, dot / safe, 1.0), -1.0, 1.0)
    angle = np.arccos(cos)

    def bw(g):
        live = valid & (np.abs(cos) < 1.0)
        scale = np.where(live, -g / np.sqrt(np.where(live, 1.0 - cos * cos, 1.0)), 0.0)
        na2s = np.where(na2 > 0, na2, 1.0)
        nb2s = np.where(nb2 > 0, nb2, 1.0)
        ga = scale * (bv / safe - cos * av / na2s) if a.requires_grad else None
        gb = scale * (av / safe - cos * bv / nb2s) if b.requires_grad else None
        return ga, gb

    return make_node(angle, (a, b), bw)
