"""Joint hyperspectral unmixing and super-resolution.

The subpackage :mod:`unmixingsr.engine` holds the reverse-mode autodiff engine;
the top-level modules build the data model, networks, trainer and metrics on it.
"""
from .hsi import (AbundanceMap, EndmemberMatrix, HsiCube, ScenePair, bicubic_upsample, degrade, load_abn,
                  load_hsc, make_pair, save_abn, save_hsc, synth_scene)
from .gram import Gram, GramConfig
from .metrics import EvalReport, ergas, evaluate, match_endmembers, psnr, sam, ssim
from .srnet import SrConfig, SrNetwork, abun_loss, sr_loss_total
from .trainer import TrainConfig, lr_schedule, patch_sampler, train_step_one, train_step_two
from .unmixing import UnmixingConfig, UnmixingNetwork, unloss_total

__version__ = "0.1.0"

__all__ = [
    "AbundanceMap", "EndmemberMatrix", "HsiCube", "ScenePair", "bicubic_upsample", "degrade", "load_abn",
    "load_hsc", "make_pair", "save_abn", "save_hsc", "synth_scene", "Gram", "GramConfig", "EvalReport",
    "ergas", "evaluate", "match_endmembers", "psnr", "sam", "ssim", "SrConfig", "SrNetwork", "abun_loss",
    "sr_loss_total", "TrainConfig", "lr_schedule", "patch_sampler", "train_step_one", "train_step_two",
    "UnmixingConfig", "UnmixingNetwork", "unloss_total",
]
