"""Flat ``key=value`` run configuration for the ``train`` command."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .trainer import TrainConfig

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass(frozen=True)
class RunConfig:
    """Training hyperparameters plus data/output locations.

    ``bands = 0`` means "take the band count from the data". ``blur`` below zero
    selects the default Gaussian width 0.8·scale/2. ``paths`` lists HR HSC1 files,
    resolved relative to the config file.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    bands: int = 0
    blur: float = -1.0
    noise: float = 0.0
    train_paths: tuple[Path, ...] = ()
    out_dir: Path = Path("run")

    @property
    def blur_sigma(self) -> float | None:
        return None if self.blur < 0 else self.blur

    @property
    def is_baseline(self) -> bool:
        return not self.train.mam_enabled and self.train.beta_ab == 0


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_EXTRA_KEYS = {"bands": int, "blur": float, "noise": float}
_PATH_KEYS = ("paths", "out_dir")
KNOWN_KEYS = tuple(_TRAIN_FIELDS) + tuple(_EXTRA_KEYS) + _PATH_KEYS


def _convert(key: str, raw: str, kind: str):
    try:
        if kind in ("bool", bool):
            return _BOOL[raw.lower()]
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_run_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    base = Path(base_dir)
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = value

    train_kwargs = {k: _convert(k, v, _TRAIN_FIELDS[k].type) for k, v in seen.items() if k in _TRAIN_FIELDS}
    extra = {k: _convert(k, seen[k], t) for k, t in _EXTRA_KEYS.items() if k in seen}
    train = TrainConfig(**train_kwargs)
    if train.p < 2:
        raise ConfigurationError(f"p must be >= 2, got {train.p}")
    if train.scale < 2 or train.scale % 2:
        raise ConfigurationError(f"scale must be an even integer >= 2, got {train.scale}")
    if extra.get("bands", 0) < 0 or extra.get("noise", 0.0) < 0:
        raise ConfigurationError("bands and noise must be >= 0")
    paths = tuple(base / p.strip() for p in seen.get("paths", "").split(",") if p.strip())
    out_dir = base / seen.get("out_dir", "run")
    return RunConfig(train, train_paths=paths, out_dir=out_dir, **extra)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(encoding="utf-8"), path.parent)


def format_run_config(cfg: RunConfig, base_dir: Path | str = ".") -> str:
    """Inverse of :func:`parse_run_config` (paths written relative to ``base_dir``)."""
    base = Path(base_dir)
    lines = [f"{f.name}={getattr(cfg.train, f.name)}" for f in dataclasses.fields(TrainConfig)]
    lines += [f"bands={cfg.bands}", f"blur={cfg.blur!r}", f"noise={cfg.noise!r}"]
    rel = [str(Path(p).relative_to(base)) if Path(p).is_relative_to(base) else str(p) for p in cfg.train_paths]
    lines.append("paths=" + ",".join(rel))
    out = Path(cfg.out_dir)
    lines.append(f"out_dir={out.relative_to(base) if out.is_relative_to(base) else out}")
    return "\n".join(lines) + "\n"
