"""Hyperspectral cubes, abundances, endmembers, synthesis, degradation and file I/O.

All rasters are held band-major in memory: a cube is a ``(bands, height, width)``
float64 array, an abundance map ``(p, height, width)``, an endmember matrix
``(p, bands)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (BadMagicError, ConfigurationError, GenerationError, HscError,
                     NonFiniteDataError, TruncatedFileError)
from .engine.nn import named_rng

HSC_MAGIC = b"HSC1"
ABN_MAGIC = b"ABN1"
_HEADER = struct.Struct("<4sIII")
ASC_TOL = 1e-5
STANDARD_SMOOTHNESS = 2
STANDARD_SHARPNESS = 20.0


@dataclass(frozen=True)
class HsiCube:
    data: np.ndarray  # (bands, height, width)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or 0 in data.shape:
            raise ConfigurationError(f"cube must be a nonempty bands×height×width array, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteDataError("cube contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class AbundanceMap:
    data: np.ndarray  # (p, height, width)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or 0 in data.shape:
            raise ConfigurationError(f"abundances must be p×height×width, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def check_simplex(self, tol: float = ASC_TOL) -> None:
        """Raise if ANC or ASC (within ``tol``) is violated."""
        if np.any(self.data < 0):
            raise ConfigurationError("abundances violate nonnegativity")
        err = np.max(np.abs(self.data.sum(axis=0) - 1.0))
        if err > tol:
            raise ConfigurationError(f"abundances violate sum-to-one (max error {err:.3g})")


@dataclass(frozen=True)
class EndmemberMatrix:
    data: np.ndarray  # (p, bands)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or 0 in data.shape:
            raise ConfigurationError(f"endmembers must be p×bands, got {data.shape}")
        if np.any(data < 0):
            raise ConfigurationError("endmembers must be nonnegative")
        if np.any(np.all(data == 0, axis=1)):
            raise ConfigurationError("endmember matrix has an all-zero row")
        object.__setattr__(self, "data", data)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def bands(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ScenePair:
    hr: HsiCube
    lr: HsiCube
    scale: int
    abundances: AbundanceMap | None = None
    endmembers: EndmemberMatrix | None = None
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if (self.hr.height, self.hr.width) != (self.scale * self.lr.height, self.scale * self.lr.width):
            raise ConfigurationError(
                f"HR {self.hr.height}×{self.hr.width} is not {self.scale}× LR {self.lr.height}×{self.lr.width}")
        if self.hr.bands != self.lr.bands:
            raise ConfigurationError("HR and LR band counts differ")


# --- linear mixing ------------------------------------------------------------
def lmm_compose(abundances: AbundanceMap, endmembers: EndmemberMatrix) -> HsiCube:
    """Per pixel, spectrum = sum_i a_i * m_i."""
    if abundances.p != endmembers.p:
        raise ConfigurationError(f"abundances have p={abundances.p}, endmembers p={endmembers.p}")
    a = abundances.data
    return HsiCube(np.tensordot(endmembers.data, a, axes=([0], [0])))


def spectral_angles(m: np.ndarray) -> np.ndarray:
    """Pairwise angles (radians) between the rows of ``m``."""
    unit = m / np.linalg.norm(m, axis=1, keepdims=True)
    return np.arccos(np.clip(unit @ unit.T, -1.0, 1.0))


def _random_endmember(rng: np.random.Generator, bands: int) -> np.ndarray:
    axis = np.arange(bands, dtype=np.float64)
    spectrum = np.zeros(bands)
    for _ in range(rng.integers(2, 5)):
        centre = rng.uniform(0.0, bands - 1)
        width = rng.uniform(bands / 16.0, bands / 4.0)
        height = rng.uniform(0.3, 1.0)
        spectrum += height * np.exp(-0.5 * ((axis - centre) / width) ** 2)
    return spectrum / spectrum.max()


def box_blur(planes: np.ndarray, times: int) -> np.ndarray:
    """Apply a 3×3 mean filter (reflect padding) ``times`` times to each plane."""
    out = planes
    for _ in range(times):
        padded = np.pad(out, ((0, 0), (1, 1), (1, 1)), mode="reflect")
        h, w = out.shape[1:]
        out = sum(padded[:, i:i + h, j:j + w] for i in range(3) for j in range(3)) / 9.0
    return out


def synth_scene(p: int, h: int, w: int, bands: int, smoothness: int = STANDARD_SMOOTHNESS, seed: int = 0,
                sharpness: float = STANDARD_SHARPNESS, min_angle: float = 0.25, max_tries: int = 1000
                ) -> tuple[AbundanceMap, EndmemberMatrix, HsiCube]:
    """Sample a noiseless LMM scene.

    Endmembers are normalized sums of 2-4 Gaussian bumps, accepted only when their
    angle to every earlier endmember is at least ``min_angle``. Abundances are a
    symmetric Dirichlet(1) field smoothed ``smoothness`` times by a 3×3 box filter,
    raised to the power ``sharpness`` and renormalized onto the simplex. Smoothing
    alone drives every pixel towards the uniform mixture; the exponent restores
    near-pure regions while keeping the field spatially smooth (1 disables it).
    """
    if p < 2:
        raise ConfigurationError(f"need p >= 2 endmembers, got {p}")
    if bands < p:
        raise ConfigurationError(f"need bands >= p, got bands={bands}, p={p}")
    if h < 2 or w < 2 or smoothness < 0 or sharpness <= 0:
        raise ConfigurationError("scene must be at least 2×2, smoothness >= 0 and sharpness > 0")

    rng = named_rng(seed, "synth.endmembers")
    rows: list[np.ndarray] = []
    tries = 0
    while len(rows) < p:
        if tries >= max_tries:
            raise GenerationError(f"could not draw {p} endmembers {min_angle} rad apart in {bands} bands")
        tries += 1
        cand = _random_endmember(rng, bands)
        unit = cand / np.linalg.norm(cand)
        if all(np.arccos(np.clip(unit @ (r / np.linalg.norm(r)), -1, 1)) >= min_angle for r in rows):
            rows.append(cand)
    endmembers = EndmemberMatrix(np.stack(rows))

    rng = named_rng(seed, "synth.abundances")
    field = rng.dirichlet(np.ones(p), size=(h, w)).transpose(2, 0, 1)
    field = box_blur(field, smoothness)
    if sharpness != 1:
        field = field / field.max(axis=0, keepdims=True)
        field = field ** sharpness
    field = field / field.sum(axis=0, keepdims=True)
    abundances = AbundanceMap(field)
    return abundances, endmembers, lmm_compose(abundances, endmembers)


# --- degradation --------------------------------------------------------------
def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(planes: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of each plane, radius ceil(3σ), reflect padding."""
    if sigma <= 0:
        return planes.copy()
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    h, w = planes.shape[1:]
    padded = np.pad(planes, ((0, 0), (r, r), (0, 0)), mode="reflect")
    rows = sum(k[i] * padded[:, i:i + h, :] for i in range(len(k)))
    padded = np.pad(rows, ((0, 0), (0, 0), (r, r)), mode="reflect")
    return sum(k[i] * padded[:, :, i:i + w] for i in range(len(k)))


def block_average(planes: np.ndarray, n: int) -> np.ndarray:
    """Mean over non-overlapping n×n blocks of each plane."""
    c, h, w = planes.shape
    if n < 1 or h % n or w % n:
        raise ConfigurationError(f"{h}×{w} is not divisible by scale {n}")
    return planes.reshape(c, h // n, n, w // n, n).mean(axis=(2, 4))


def default_blur_sigma(n: int) -> float:
    return 0.8 * n / 2.0


def degrade_planes(planes: np.ndarray, n: int, blur_sigma: float) -> np.ndarray:
    """Noiseless part of :func:`degrade`, usable on cubes and abundance maps alike."""
    c, h, w = planes.shape
    if n < 1 or h % n or w % n:
        raise ConfigurationError(f"{h}×{w} is not divisible by scale {n}")
    return block_average(gaussian_blur(planes, blur_sigma), n)


def degrade(hr: HsiCube, n: int, blur_sigma: float | None = None, noise_sigma: float = 0.0,
            seed: int = 0) -> HsiCube:
    """HR -> LR: per-band Gaussian blur, n×n area decimation, additive noise, clip to [0, 1]."""
    sigma = default_blur_sigma(n) if blur_sigma is None else blur_sigma
    if sigma < 0 or noise_sigma < 0:
        raise ConfigurationError("blur and noise sigma must be >= 0")
    lr = degrade_planes(hr.data, n, sigma)
    if noise_sigma > 0:
        lr = lr + named_rng(seed, "degrade.noise").normal(0.0, noise_sigma, size=lr.shape)
    return HsiCube(np.clip(lr, 0.0, 1.0))


def make_pair(hr: HsiCube, n: int, blur_sigma: float | None = None, noise_sigma: float = 0.0,
              seed: int = 0, abundances: AbundanceMap | None = None,
              endmembers: EndmemberMatrix | None = None) -> ScenePair:
    sigma = default_blur_sigma(n) if blur_sigma is None else blur_sigma
    lr = degrade(hr, n, sigma, noise_sigma, seed)
    return ScenePair(hr, lr, n, abundances, endmembers, sigma, noise_sigma, seed)


def replicate_upsample(planes: np.ndarray, n: int) -> np.ndarray:
    """Copy every pixel into an n×n block."""
    return np.repeat(np.repeat(planes, n, axis=1), n, axis=2)


# --- bicubic interpolation ----------------------------------------------------
def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    return np.where(t <= 1, ((a + 2) * t - (a + 3)) * t * t + 1,
                    np.where(t < 2, ((t - 5) * t + 8) * t * a - 4 * a, 0.0))


def _reflect_index(i: np.ndarray, size: int) -> np.ndarray:
    if size == 1:
        return np.zeros_like(i)
    period = 2 * (size - 1)
    i = np.mod(i, period)
    return np.where(i >= size, period - i, i)


def bicubic_matrix(size: int, n: int) -> np.ndarray:
    """(n·size)×size Catmull-Rom (a = -0.5) resampling matrix, half-pixel centres, reflect padding."""
    out = np.zeros((n * size, size))
    for o in range(n * size):
        x = (o + 0.5) / n - 0.5
        base = math.floor(x)
        taps = np.arange(base - 1, base + 3)
        weights = _cubic(x - taps)
        np.add.at(out[o], _reflect_index(taps, size), weights)
    return out


def bicubic_upsample(planes: np.ndarray, n: int) -> np.ndarray:
    """Upsample each C×h×w plane by an integer factor n."""
    if n == 1:
        return planes.copy()
    _, h, w = planes.shape
    rows, cols = bicubic_matrix(h, n), bicubic_matrix(w, n)
    return np.einsum("ij,cjk,lk->cil", rows, planes, cols, optimize=True)


# --- HSC1 / ABN1 containers -----------------------------------------------------
def _write_container(path, magic: bytes, planes: np.ndarray) -> None:
    if not np.all(np.isfinite(planes)):
        raise NonFiniteDataError("refusing to write non-finite values")
    c, h, w = planes.shape
    payload = np.ascontiguousarray(planes, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, h, w, c))
        fh.write(payload)


def _read_container(path, magic: bytes) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes is shorter than the 16-byte header")
    got, h, w, c = _HEADER.unpack_from(raw)
    if got != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, found {got!r}")
    need = _HEADER.size + 4 * h * w * c
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: header declares {need} bytes, file has {len(raw)}")
    if len(raw) > need:
        raise HscError(f"{path}: {len(raw) - need} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=_HEADER.size).reshape(c, h, w)
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite values")
    return data.astype(np.float64)


def save_hsc(cube: HsiCube, path) -> None:
    """Write an HSC1 file: magic, u32 h/w/B little-endian, float32 LE band-major payload."""
    _write_container(path, HSC_MAGIC, cube.data)


def load_hsc(path) -> HsiCube:
    return HsiCube(_read_container(path, HSC_MAGIC))


def save_abn(abundances: AbundanceMap, path) -> None:
    _write_container(path, ABN_MAGIC, abundances.data)


def load_abn(path) -> AbundanceMap:
    return AbundanceMap(_read_container(path, ABN_MAGIC))


def save_endmembers_csv(endmembers: EndmemberMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in endmembers.data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_endmembers_csv(path) -> EndmemberMatrix:
    return EndmemberMatrix(np.loadtxt(path, delimiter=",", ndmin=2))


# --- visualization ------------------------------------------------------------------
def plane_to_uint8(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 128, dtype=np.uint8)
    return np.round((plane - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_png(raster: HsiCube | AbundanceMap, index: int, path) -> None:
    """Write one band/abundance channel as an 8-bit min-max normalized grayscale PNG."""
    planes = raster.data
    if not 0 <= index < planes.shape[0]:
        raise IndexError(f"index {index} out of range for {planes.shape[0]} planes")
    Image.fromarray(plane_to_uint8(planes[index])).save(path, format="PNG")
