"""Both training steps on four scenes, then x2 SR of a held-out scene against bicubic.

Takes a few minutes on one core. Pass --quick for a short smoke run.
"""
import sys

from unmixingsr.hsi import HsiCube, bicubic_upsample, make_pair, synth_scene
from unmixingsr.metrics import evaluate
from unmixingsr.trainer import TrainConfig, evaluate_pair, train_step_one, train_step_two

quick = "--quick" in sys.argv

pairs = []
for k, seed in enumerate((100, 101, 102, 103, 104)):
    a, m, y = synth_scene(3, 64, 64, 16, seed=seed)
    pairs.append(make_pair(y, 2, seed=k, abundances=a, endmembers=m))
train, held = pairs[:4], pairs[4]

config = TrainConfig(scale=2, width=16, gram_count=2, epochs_step1=30, epochs_step2=30,
                     steps_per_epoch=100, patch=16)
if quick:
    config = config.replace(epochs_step1=3, epochs_step2=3, steps_per_epoch=10)

# Step I learns abundances from LR data only
step1 = train_step_one([p.lr for p in train], config.replace(steps_per_epoch=max(10, config.steps_per_epoch // 3)))
print("step I final loss", round(step1.history[-1]["loss_total"], 5))

# Step II: SR with MAM fusion and the abundance-consistency term, unmixing weights frozen
full = train_step_two(train, step1.network, config)
# Ablation: same seeds and budget, no MAM and no abundance term
base = train_step_two(train, step1.network, config.replace(mam_enabled=False, beta_ab=0.0))

bicubic = evaluate(held.hr, HsiCube(bicubic_upsample(held.lr.data, 2)), 2)
for name, run in (("MAM + AbunLoss", full), ("baseline", base)):
    report, abun = evaluate_pair(run.network, step1.network, held)
    print(f"{name:15s} PSNR {report.psnr:.3f}  SAM {report.sam:.3f}  SSIM {report.ssim:.4f}  abun_loss {abun:.4f}")
print(f"{'bicubic':15s} PSNR {bicubic.psnr:.3f}  SAM {bicubic.sam:.3f}  SSIM {bicubic.ssim:.4f}")
