"""Full-reference quality metrics for reconstructed cubes, plus endmember matching."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MetricError
from .hsi import HsiCube

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _arrays(ref, est) -> tuple[np.ndarray, np.ndarray]:
    r = ref.data if isinstance(ref, HsiCube) else np.asarray(ref, dtype=np.float64)
    e = est.data if isinstance(est, HsiCube) else np.asarray(est, dtype=np.float64)
    if r.shape != e.shape:
        raise ConfigurationError(f"shape mismatch {r.shape} vs {e.shape}")
    return r, e


def psnr_bands(ref, est) -> np.ndarray:
    r, e = _arrays(ref, est)
    mse = ((r - e) ** 2).mean(axis=(1, 2))
    with np.errstate(divide="ignore"):
        return np.where(mse > 0, 10.0 * np.log10(1.0 / np.where(mse > 0, mse, 1.0)), np.inf)


def psnr(ref, est) -> float:
    """Mean over bands of 10·log10(1/MSE_band), unit peak; +inf if any band is exact."""
    return float(np.mean(psnr_bands(ref, est)))


def _gaussian_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    g /= g.sum()
    return g


def _filter_valid(planes: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    h, w = planes.shape[1:]
    rows = sum(g[i] * planes[:, i:i + h - n + 1, :] for i in range(n))
    return sum(g[i] * rows[:, :, i:i + w - n + 1] for i in range(n))


def ssim(ref, est) -> float:
    """Band-mean SSIM: 11×11 Gaussian window (σ = 1.5), valid region, unit dynamic range."""
    r, e = _arrays(ref, est)
    if min(r.shape[1:]) < SSIM_WINDOW:
        raise ConfigurationError(f"SSIM needs spatial dims >= {SSIM_WINDOW}, got {r.shape[1:]}")
    g = _gaussian_window()
    mu_r, mu_e = _filter_valid(r, g), _filter_valid(e, g)
    var_r = _filter_valid(r * r, g) - mu_r * mu_r
    var_e = _filter_valid(e * e, g) - mu_e * mu_e
    cov = _filter_valid(r * e, g) - mu_r * mu_e
    num = (2 * mu_r * mu_e + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_r * mu_r + mu_e * mu_e + SSIM_C1) * (var_r + var_e + SSIM_C2)
    return float(np.mean((num / den).mean(axis=(1, 2))))


def pixel_angles(ref, est) -> np.ndarray:
    """Per-pixel spectral angle in radians; pixels with a zero-norm spectrum give 0."""
    r, e = _arrays(ref, est)
    dot = (r * e).sum(axis=0)
    denom = np.sqrt((r * r).sum(axis=0) * (e * e).sum(axis=0))
    cos = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), 1.0)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def sam(ref, est) -> float:
    """Mean spectral angle in degrees."""
    return float(np.degrees(pixel_angles(ref, est).mean()))


def ergas(ref, est, n: int) -> float:
    """(100/n)·sqrt(mean_b RMSE_b² / mean(ref_b)²); zero-mean reference bands are skipped."""
    r, e = _arrays(ref, est)
    if n <= 0:
        raise ConfigurationError(f"scale must be positive, got {n}")
    means = r.mean(axis=(1, 2))
    keep = means != 0
    if not keep.any():
        raise MetricError("ERGAS undefined: every reference band has zero mean")
    if not keep.all():
        warnings.warn(f"ERGAS: skipping {int((~keep).sum())} zero-mean band(s)", RuntimeWarning, stacklevel=2)
    mse = ((r - e) ** 2).mean(axis=(1, 2))[keep]
    return float(100.0 / n * math.sqrt(np.mean(mse / means[keep] ** 2)))


@dataclass
class EvalReport:
    psnr: float
    ssim: float
    sam: float
    ergas: float
    scale: int
    psnr_bands: list[float] = field(default_factory=list)

    def to_text(self) -> str:
        def fmt(v: float) -> str:
            return "inf" if v == math.inf else format(v, ".10g")
        lines = [f"psnr={fmt(self.psnr)}", f"ssim={fmt(self.ssim)}", f"sam={fmt(self.sam)}",
                 f"ergas={fmt(self.ergas)}", f"scale={self.scale}"]
        lines += [f"psnr_band_{i}={fmt(v)}" for i, v in enumerate(self.psnr_bands)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> EvalReport:
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        bands = sorted((int(k.rsplit("_", 1)[1]), float(v)) for k, v in kv.items() if k.startswith("psnr_band_"))
        return cls(float(kv["psnr"]), float(kv["ssim"]), float(kv["sam"]), float(kv["ergas"]),
                   int(kv["scale"]), [v for _, v in bands])


def evaluate(ref, est, n: int) -> EvalReport:
    return EvalReport(psnr(ref, est), ssim(ref, est), sam(ref, est), ergas(ref, est, n), n,
                      [float(v) for v in psnr_bands(ref, est)])


def match_endmembers(true, est) -> tuple[tuple[int, ...], float]:
    """Exhaustive search for the row permutation of ``est`` minimizing mean angle to ``true``.

    Returns (perm, mean angle in radians) where est row perm[i] matches true row i.
    """
    t = getattr(true, "data", true)
    e = getattr(est, "data", est)
    t, e = np.asarray(t, dtype=np.float64), np.asarray(e, dtype=np.float64)
    if t.shape != e.shape:
        raise ConfigurationError(f"endmember shapes differ: {t.shape} vs {e.shape}")
    p = t.shape[0]
    if p > 8:
        raise ConfigurationError(f"exhaustive matching supports p <= 8, got {p}")
    tu = t / np.linalg.norm(t, axis=1, keepdims=True)
    eu = e / np.linalg.norm(e, axis=1, keepdims=True)
    cost = np.arccos(np.clip(tu @ eu.T, -1.0, 1.0))
    best_perm, best = None, math.inf
    rows = np.arange(p)
    for perm in itertools.permutations(range(p)):
        score = cost[rows, list(perm)].mean()
        if score < best:
            best_perm, best = perm, float(score)
    return best_perm, best
