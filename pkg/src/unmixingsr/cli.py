"""Command-line front end.

Exit codes: 0 success, 1 usage/validation error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import Checkpoint
from .config import load_run_config
from .errors import (CheckpointError, ConfigurationError, GenerationError, HscError, MetricError,
                     NumericalError, UsageError)
from .hsi import (ABN_MAGIC, STANDARD_SHARPNESS, STANDARD_SMOOTHNESS, default_blur_sigma, degrade,
                  export_png, load_abn, load_hsc, make_pair, save_abn, save_endmembers_csv, save_hsc,
                  synth_scene)
from .metrics import evaluate
from .trainer import (sr_from_checkpoint, train_step_one, train_step_two, unmixing_from_checkpoint)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("unmixingsr")


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageExit(f"{self.prog}: error: {message}")


def _cmd_synth(args) -> None:
    if args.p < 2:
        raise ConfigurationError(f"--p must be >= 2, got {args.p}")
    if args.size < 2 or args.bands < args.p:
        raise ConfigurationError("--size must be >= 2 and --bands >= --p")
    abundances, endmembers, cube = synth_scene(args.p, args.size, args.size, args.bands, args.smoothness,
                                               args.seed, sharpness=args.sharpness)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_hsc(cube, out / "hr.hsc")
    save_abn(abundances, out / "abundances.abn")
    save_endmembers_csv(endmembers, out / "endmembers.csv")
    print(f"wrote {out / 'hr.hsc'}, {out / 'abundances.abn'}, {out / 'endmembers.csv'}")


def _cmd_degrade(args) -> None:
    cube = load_hsc(args.inp)
    if args.scale < 1 or cube.height % args.scale or cube.width % args.scale:
        raise ConfigurationError(f"{cube.height}×{cube.width} is not divisible by scale {args.scale}")
    blur = default_blur_sigma(args.scale) if args.blur is None else args.blur
    lr = degrade(cube, args.scale, blur, args.noise, args.seed)
    save_hsc(lr, args.out)
    print(f"wrote {args.out}: {lr.height}×{lr.width}×{lr.bands}")


def _cmd_train(args) -> None:
    cfg = load_run_config(args.config)
    tcfg = cfg.train
    if not cfg.train_paths:
        raise ConfigurationError("config lists no training cubes (key 'paths')")
    hr_cubes = [load_hsc(p) for p in cfg.train_paths]
    bands = hr_cubes[0].bands
    if cfg.bands and cfg.bands != bands:
        raise ConfigurationError(f"config bands={cfg.bands} but data has {bands} bands")
    pairs = [make_pair(c, tcfg.scale, cfg.blur_sigma, cfg.noise, tcfg.seed + k) for k, c in enumerate(hr_cubes)]
    tag = "baseline" if cfg.is_baseline else "unmixingsr"
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    print(f"[{tag}] step I: {len(pairs)} LR cube(s), {tcfg.epochs_step1} epochs")
    step1 = train_step_one([p.lr for p in pairs], tcfg, log_path=out / "step1.csv")
    step1.checkpoint.save(out / "unmix.ckpt")
    print(f"[{tag}] step I final loss {step1.history[-1]['loss_total']:.6g}")
    print(f"[{tag}] step II: {tcfg.epochs_step2} epochs, mam={tcfg.mam_enabled}, beta_ab={tcfg.beta_ab}")
    step2 = train_step_two(pairs, step1.network, tcfg, log_path=out / "step2.csv")
    step2.checkpoint.save(out / "sr.ckpt")
    print(f"[{tag}] step II final loss {step2.history[-1]['loss_total']:.6g}")
    print(f"[{tag}] wrote {out / 'unmix.ckpt'}, {out / 'sr.ckpt'}, {out / 'step1.csv'}, {out / 'step2.csv'}")


def _cmd_sr(args) -> None:
    sr = sr_from_checkpoint(Checkpoint.load(args.ckpt))
    cube = load_hsc(args.inp)
    if cube.bands != sr.config.bands:
        raise ConfigurationError(f"checkpoint expects {sr.config.bands} bands, input {args.inp} has "
                                 f"{cube.height}×{cube.width}×{cube.bands}")
    abundances = None
    if sr.config.mam_enabled:
        unmix_path = Path(args.unmix_ckpt) if args.unmix_ckpt else Path(args.ckpt).with_name("unmix.ckpt")
        unmix = unmixing_from_checkpoint(Checkpoint.load(unmix_path))
        if unmix.config.bands != cube.bands or unmix.config.p != sr.config.p:
            raise ConfigurationError(f"unmixing checkpoint is B={unmix.config.bands}, p={unmix.config.p}; "
                                     f"SR checkpoint is B={sr.config.bands}, p={sr.config.p}")
        abundances, _ = unmix.unmix(cube)
    out = sr.super_resolve(cube, abundances)
    save_hsc(out, args.out)
    print(f"wrote {args.out}: {out.height}×{out.width}×{out.bands}")


def _cmd_unmix(args) -> None:
    net = unmixing_from_checkpoint(Checkpoint.load(args.ckpt))
    cube = load_hsc(args.inp)
    if cube.bands != net.config.bands:
        raise ConfigurationError(f"checkpoint expects {net.config.bands} bands, input {args.inp} has "
                                 f"{cube.height}×{cube.width}×{cube.bands}")
    abundances, _ = net.unmix(cube)
    save_abn(abundances, args.out)
    print(f"wrote {args.out}: {abundances.height}×{abundances.width}×{abundances.p}")


def _cmd_eval(args) -> None:
    ref, est = load_hsc(args.ref), load_hsc(args.est)
    if ref.data.shape != est.data.shape:
        raise ConfigurationError(f"reference is {ref.height}×{ref.width}×{ref.bands}, "
                                 f"estimate is {est.height}×{est.width}×{est.bands}")
    sys.stdout.write(evaluate(ref, est, args.scale).to_text())


def _cmd_export_png(args) -> None:
    with open(args.inp, "rb") as fh:
        magic = fh.read(4)
    raster = load_abn(args.inp) if magic == ABN_MAGIC else load_hsc(args.inp)
    if not 0 <= args.index < raster.data.shape[0]:
        raise ConfigurationError(f"--index {args.index} out of range for {raster.data.shape[0]} planes")
    export_png(raster, args.index, args.out)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="unmixingsr", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic LMM scene", formatter_class=fmt)
    p.add_argument("--p", type=int, default=3, help="number of endmembers (>= 2)")
    p.add_argument("--size", type=int, default=32, help="image height and width")
    p.add_argument("--bands", type=int, default=16, help="spectral bands")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--smoothness", type=int, default=STANDARD_SMOOTHNESS, help="box-blur passes")
    p.add_argument("--sharpness", type=float, default=STANDARD_SHARPNESS, help="abundance sharpening exponent")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("degrade", help="blur, decimate and add noise to an HR cube", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, help="HR HSC1 cube")
    p.add_argument("--scale", type=int, default=4, help="decimation factor")
    p.add_argument("--blur", type=float, default=None, help="Gaussian sigma (default 0.8*scale/2; 0 disables)")
    p.add_argument("--noise", type=float, default=0.0, help="additive Gaussian noise sigma")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", required=True, help="output HSC1 file")
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("train", help="two-step training from a key=value config", formatter_class=fmt)
    p.add_argument("--config", required=True, help="run configuration file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sr", help="super-resolve an LR cube", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="SR checkpoint")
    p.add_argument("--unmix-ckpt", default=None, help="unmixing checkpoint (default: unmix.ckpt beside --ckpt)")
    p.add_argument("--in", dest="inp", required=True, help="LR HSC1 cube")
    p.add_argument("--out", required=True, help="output HSC1 file")
    p.set_defaults(func=_cmd_sr)

    p = sub.add_parser("unmix", help="estimate abundances of a cube", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="unmixing checkpoint")
    p.add_argument("--in", dest="inp", required=True, help="HSC1 cube")
    p.add_argument("--out", required=True, help="output ABN1 file")
    p.set_defaults(func=_cmd_unmix)

    p = sub.add_parser("eval", help="PSNR, SSIM, SAM and ERGAS of an estimate", formatter_class=fmt)
    p.add_argument("--ref", required=True, help="reference HSC1 cube")
    p.add_argument("--est", required=True, help="estimated HSC1 cube")
    p.add_argument("--scale", type=int, default=1, help="SR factor used by ERGAS")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-png", help="write one band or abundance channel as PNG", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, help="HSC1 or ABN1 file")
    p.add_argument("--index", type=int, default=0, help="band or abundance channel")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=_cmd_export_png)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigurationError, UsageError, GenerationError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HscError, CheckpointError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
