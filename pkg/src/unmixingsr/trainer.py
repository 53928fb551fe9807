"""Two-step training: unsupervised unmixing on LR data, then SR with the unmixing net frozen."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .checkpoint import Checkpoint, config_hash
from .engine import Adam, Module, Tensor, backward, named_rng, no_grad
from .errors import ConfigurationError, NumericalError
from .hsi import HsiCube, ScenePair
from .metrics import EvalReport, evaluate
from .srnet import SrConfig, SrNetwork, abun_loss, combine_sr_loss, sr_loss_l1, sr_loss_sad
from .unmixing import UnmixingConfig, UnmixingNetwork, unloss_terms

log = logging.getLogger(__name__)

CSV_HEADER = ("epoch", "step", "loss_total", "loss_l1", "loss_sad", "loss_tv_or_abun", "lr")


@dataclass(frozen=True)
class TrainConfig:
    scale: int = 2
    p: int = 3
    unmix_width: int = 32
    unmix_grams: int = 2
    unmix_kernel: int = 1
    width: int = 64
    gram_count: int = 9
    alpha: float = 0.1
    beta_tv: float = 1e-3
    beta_ab: float = 0.2
    mam_enabled: bool = True
    deconv_mode: str = "replicate"
    epochs_step1: int = 120
    epochs_step2: int = 120
    steps_per_epoch: int = 50
    accumulate: int = 1
    patch: int = 16
    lr0: float = 5e-4
    lr_period: int = 40
    endmember_init: str = "mean"
    seed: int = 0

    def __post_init__(self):
        positive = ("scale", "p", "unmix_width", "width", "gram_count", "epochs_step1", "epochs_step2",
                    "steps_per_epoch", "accumulate", "patch", "lr_period")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.unmix_grams < 0:
            raise ConfigurationError("unmix_grams must be >= 0")
        if not self.lr0 > 0:
            raise ConfigurationError(f"lr0 must be positive, got {self.lr0}")
        if min(self.alpha, self.beta_tv, self.beta_ab) < 0:
            raise ConfigurationError("loss weights must be >= 0")
        if self.endmember_init not in ("mean", "uniform"):
            raise ConfigurationError(f"endmember_init must be 'mean' or 'uniform', got {self.endmember_init!r}")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)


def lr_schedule(epoch: int, lr0: float = 5e-4, period: int = 40) -> float:
    """Step decay: halve every ``period`` epochs."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be >= 0, got {epoch}")
    return lr0 * 0.5 ** (epoch // period)


# --- patch sampling ---------------------------------------------------------------
def patch_sampler(scene: ScenePair, patch: int, n: int | None = None, seed: int = 0
                  ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless aligned crops: LR patch at (i, j) with the HR patch at (n·i, n·j)."""
    n = scene.scale if n is None else n
    if n != scene.scale:
        raise ConfigurationError(f"sampler scale {n} differs from scene scale {scene.scale}")
    h, w = scene.lr.height, scene.lr.width
    if patch < 1 or patch > min(h, w):
        raise ConfigurationError(f"patch {patch} does not fit LR image {h}×{w}")
    rng = named_rng(seed, "patch_sampler")
    while True:
        i = int(rng.integers(0, h - patch + 1))
        j = int(rng.integers(0, w - patch + 1))
        yield (scene.lr.data[:, i:i + patch, j:j + patch],
               scene.hr.data[:, n * i:n * (i + patch), n * j:n * (j + patch)])


def _multi_sampler(items: Sequence, seed: int, crop: Callable) -> Iterator:
    rng = named_rng(seed, "scene_choice")
    streams = [crop(item, named_rng(seed, f"scene.{k}")) for k, item in enumerate(items)]
    while True:
        yield next(streams[int(rng.integers(0, len(items)))])


def _cube_crops(cube: HsiCube, patch: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    h, w = cube.height, cube.width
    if patch > min(h, w):
        raise ConfigurationError(f"patch {patch} does not fit image {h}×{w}")
    while True:
        i = int(rng.integers(0, h - patch + 1))
        j = int(rng.integers(0, w - patch + 1))
        yield cube.data[:, i:i + patch, j:j + patch]


def _pair_crops(pair: ScenePair, patch: int, rng: np.random.Generator):
    n, h, w = pair.scale, pair.lr.height, pair.lr.width
    if patch > min(h, w):
        raise ConfigurationError(f"patch {patch} does not fit LR image {h}×{w}")
    while True:
        i = int(rng.integers(0, h - patch + 1))
        j = int(rng.integers(0, w - patch + 1))
        yield (pair.lr.data[:, i:i + patch, j:j + patch],
               pair.hr.data[:, n * i:n * (i + patch), n * j:n * (j + patch)])


# --- checkpoint conversion ------------------------------------------------------------
def _meta_for(net: Module) -> dict:
    meta = {k: str(v) for k, v in net.config.to_dict().items()}
    meta["kind"] = net.kind
    return meta


def make_checkpoint(net: Module, opt: Adam | None, epoch: int, config: TrainConfig | None) -> Checkpoint:
    params = net.state_dict()
    m = {k: v.copy() for k, v in opt.state.m.items()} if opt else {}
    v = {k: v.copy() for k, v in opt.state.v.items()} if opt else {}
    digest = config_hash(config.to_text()) if config else bytes(32)
    return Checkpoint(net.kind, _meta_for(net), params, m, v, opt.state.t if opt else 0, epoch, digest)


def _typed_config(cls, meta: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        raw = meta[f.name]
        if f.type in ("bool", bool):
            kwargs[f.name] = raw == "True"
        elif f.type in ("int", int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = raw
    return cls(**kwargs)


def unmixing_from_checkpoint(ckpt: Checkpoint) -> UnmixingNetwork:
    if ckpt.kind != UnmixingNetwork.kind:
        raise ConfigurationError(f"expected an unmixing checkpoint, got kind {ckpt.kind!r}")
    net = UnmixingNetwork(_typed_config(UnmixingConfig, ckpt.meta))
    net.load_state_dict(ckpt.params)
    return net


def sr_from_checkpoint(ckpt: Checkpoint) -> SrNetwork:
    if ckpt.kind != SrNetwork.kind:
        raise ConfigurationError(f"expected an SR checkpoint, got kind {ckpt.kind!r}")
    net = SrNetwork(_typed_config(SrConfig, ckpt.meta))
    net.load_state_dict(ckpt.params)
    return net


def params_digest(net: Module) -> str:
    h = hashlib.sha256()
    for name, p in net.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return h.hexdigest()


# --- training loop ------------------------------------------------------------------
@dataclass
class TrainResult:
    network: Module
    optimizer: Adam
    history: list[dict] = field(default_factory=list)
    checkpoint: Checkpoint | None = None
    frozen_digests: list[str] = field(default_factory=list)


def write_loss_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in history:
            writer.writerow([row["epoch"], row["step"]] +
                            [format(row[k], ".17g") for k in CSV_HEADER[2:]])


def _norms(net: Module) -> str:
    return ", ".join(f"{n}={np.linalg.norm(p.value):.4g}" for n, p in net.named_parameters())


def _run_epochs(net: Module, opt: Adam, config: TrainConfig, epochs: int,
                step_fn: Callable[[], dict[str, Tensor]],
                on_step: Callable | None, after_epoch: Callable | None) -> list[dict]:
    history = []
    step = 0
    for epoch in range(epochs):
        lr = lr_schedule(epoch, config.lr0, config.lr_period)
        sums = dict.fromkeys(("total", "l1", "sad", "aux"), 0.0)
        count = 0
        for _ in range(config.steps_per_epoch):
            opt.zero_grad()
            for _ in range(config.accumulate):
                terms = step_fn()
                total = terms["total"]
                if not np.isfinite(total.item()):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, step {step}; "
                                         f"parameter norms: {_norms(net)}")
                scaled = total * (1.0 / config.accumulate) if config.accumulate > 1 else total
                backward(scaled)
                for key in sums:
                    sums[key] += terms[key].item()
                count += 1
            opt.step(lr)
            step += 1
            if on_step is not None:
                on_step(step, net, terms)
        row = {"epoch": epoch, "step": step, "lr": lr,
               "loss_total": sums["total"] / count, "loss_l1": sums["l1"] / count,
               "loss_sad": sums["sad"] / count, "loss_tv_or_abun": sums["aux"] / count}
        history.append(row)
        log.info("epoch %d step %d loss %.6g lr %.3g", epoch, step, row["loss_total"], lr)
        if after_epoch is not None:
            after_epoch(epoch)
    return history


def init_endmembers_from_mean(net: UnmixingNetwork, cubes: Sequence[HsiCube], seed: int) -> None:
    """Start every decoder endmember at the mean training spectrum with ±10 % seeded jitter."""
    mean = np.mean([c.data.mean(axis=(1, 2)) for c in cubes], axis=0)
    jitter = named_rng(seed, "decoder.endmember_init").uniform(-0.1, 0.1, size=(net.config.p, mean.size))
    endmembers = mean[None, :] * (1.0 + jitter)
    net.decoder.weight.value = endmembers.T[:, :, None, None].copy()
    net.decoder.weight.project()


def train_step_one(cubes: Sequence[HsiCube], config: TrainConfig, on_step: Callable | None = None,
                   log_path=None) -> TrainResult:
    """Minimize the unmixing loss over random crops of the given (LR) cubes."""
    cubes = list(cubes)
    if not cubes:
        raise ConfigurationError("step I needs at least one cube")
    bands = cubes[0].bands
    if any(c.bands != bands for c in cubes):
        raise ConfigurationError("all training cubes must share one band count")
    patch = min(config.patch, *(min(c.height, c.width) for c in cubes))
    net = UnmixingNetwork(UnmixingConfig(bands, config.p, config.unmix_width, config.unmix_grams,
                                         config.unmix_kernel),
                          seed=config.seed)
    if config.endmember_init == "mean":
        init_endmembers_from_mean(net, cubes, config.seed)
    opt = Adam(net.named_parameters())
    crops = _multi_sampler(cubes, config.seed,
                           lambda c, rng: _cube_crops(c, patch, rng))

    def step_fn():
        return unloss_terms(net, Tensor(next(crops)), config.alpha, config.beta_tv)

    history = _run_epochs(net, opt, config, config.epochs_step1, step_fn, on_step, None)
    result = TrainResult(net, opt, history, make_checkpoint(net, opt, config.epochs_step1, config))
    if log_path is not None:
        write_loss_csv(history, log_path)
    return result


def sr_terms(sr: SrNetwork, unmix: UnmixingNetwork, y_lr: np.ndarray, y_hr: np.ndarray,
             alpha: float, beta_ab: float) -> dict[str, Tensor]:
    """One SR forward pass with its loss terms; the unmixing net is used but never updated."""
    n = sr.config.scale
    with no_grad():
        a_lr = unmix.encode(Tensor(y_lr))
    y_sr = sr(Tensor(y_lr), a_lr if sr.config.mam_enabled else None)
    l1, sad = sr_loss_l1(Tensor(y_hr), y_sr), sr_loss_sad(Tensor(y_hr), y_sr)
    if beta_ab > 0:
        abun = abun_loss(unmix.encode(y_sr), a_lr, n, sr.deconv_kernel())
    else:
        with no_grad():
            abun = abun_loss(unmix.encode(y_sr.detach()), a_lr, n, sr.deconv_kernel())
    return {"total": combine_sr_loss(l1, sad, abun, alpha, beta_ab), "l1": l1, "sad": sad, "aux": abun,
            "sr": y_sr}


def train_step_two(pairs: Sequence[ScenePair], unmixing: Checkpoint | UnmixingNetwork, config: TrainConfig,
                   on_step: Callable | None = None, log_path=None) -> TrainResult:
    """Train the SR network on LR/HR crops with the step-I unmixing weights frozen."""
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("step II needs at least one scene pair")
    unmix = unmixing_from_checkpoint(unmixing) if isinstance(unmixing, Checkpoint) else unmixing
    bands = pairs[0].hr.bands
    for pair in pairs:
        if pair.scale != config.scale:
            raise ConfigurationError(f"pair scale {pair.scale} differs from config scale {config.scale}")
        if pair.hr.bands != bands:
            raise ConfigurationError("all pairs must share one band count")
    if unmix.config.bands != bands or unmix.config.p != config.p:
        raise ConfigurationError(
            f"unmixing checkpoint has B={unmix.config.bands}, p={unmix.config.p}; data has B={bands}, "
            f"config p={config.p}")
    saved_flags = [p.trainable for p in unmix.parameters()]
    unmix.freeze()

    sr = SrNetwork(SrConfig(bands, config.p, config.scale, config.width, config.gram_count,
                            mam_enabled=config.mam_enabled, deconv_mode=config.deconv_mode),
                   seed=config.seed)
    opt = Adam(sr.named_parameters())
    patch = min(config.patch, *(min(p.lr.height, p.lr.width) for p in pairs))
    crops = _multi_sampler(pairs, config.seed, lambda pr, rng: _pair_crops(pr, patch, rng))
    digests = [params_digest(unmix)]

    def step_fn():
        y_lr, y_hr = next(crops)
        return sr_terms(sr, unmix, y_lr, y_hr, config.alpha, config.beta_ab)

    def after_epoch(epoch):
        digests.append(params_digest(unmix))
        if digests[-1] != digests[0]:
            raise NumericalError(f"frozen unmixing weights changed during epoch {epoch}")

    try:
        history = _run_epochs(sr, opt, config, config.epochs_step2, step_fn, on_step, after_epoch)
    finally:
        for p, flag in zip(unmix.parameters(), saved_flags):
            p.trainable = flag
    result = TrainResult(sr, opt, history, make_checkpoint(sr, opt, config.epochs_step2, config), digests)
    if log_path is not None:
        write_loss_csv(history, log_path)
    return result


def evaluate_pair(sr: SrNetwork, unmix: UnmixingNetwork, pair: ScenePair) -> tuple[EvalReport, float]:
    """Metrics of the SR output against the HR reference, plus its abundance consistency loss."""
    with no_grad():
        a_lr = unmix.encode(Tensor(pair.lr.data))
        y_sr = sr(Tensor(pair.lr.data), a_lr if sr.config.mam_enabled else None)
        abun = abun_loss(unmix.encode(y_sr), a_lr, pair.scale, sr.deconv_kernel()).item()
    return evaluate(pair.hr, HsiCube(y_sr.value), pair.scale), abun
