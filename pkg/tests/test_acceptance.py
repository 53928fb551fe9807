"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see conftest.py).
"""
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE
from unmixingsr import cli
from unmixingsr.checkpoint import Checkpoint
from unmixingsr.engine import (Tensor, backward, channel_attention, concat, conv2d, layer_norm, leaky_relu, mean,
                               no_grad, pixel_shuffle, relu, sigmoid, softmax_channels, spectral_angle, tabs,
                               transposed_conv2d, tsum)
from unmixingsr.gram import Gram, GramConfig
from unmixingsr.hsi import (HsiCube, bicubic_upsample, block_average, degrade, load_hsc,
                            save_hsc)
from unmixingsr.metrics import ergas, match_endmembers, psnr, sam, ssim
from unmixingsr.srnet import abun_loss, sr_loss_l1, sr_loss_sad, sr_loss_total
from unmixingsr.trainer import evaluate_pair, lr_schedule
from unmixingsr.unmixing import reconstruction_rmse, unloss_l1, unloss_sad, unloss_total, unloss_tv

pytestmark = pytest.mark.slow


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"


# 1 -------------------------------------------------------------------------------------------------
def _primitive_cases(rng):
    """(name, scalar builder, input arrays) for every differentiable primitive."""
    w = lambda *s: Tensor(rng.normal(size=s))  # noqa: E731
    away = lambda a: np.where(np.abs(a) < 1e-2, 0.3, a)  # noqa: E731  keep off the kinks
    wx, wc, wt, ws, wl, wa = w(3, 4), w(3, 4, 4), w(2, 6, 6), w(2, 4, 2), w(4, 3, 3), w(8, 2, 2)
    return [
        ("add/sub/mul/div", lambda a, b: tsum((a + b) * a - a / b), [rng.normal(size=(3, 4)),
                                                                    rng.uniform(1, 2, size=(1, 4))]),
        ("pow", lambda a: tsum(a ** 3 * wx), [rng.normal(size=(3, 4))]),
        ("abs", lambda a: tsum(tabs(a) * wx), [away(rng.normal(size=(3, 4)))]),
        ("relu", lambda a: tsum(relu(a) * wx), [away(rng.normal(size=(3, 4)))]),
        ("leaky_relu", lambda a: tsum(leaky_relu(a) * wx), [away(rng.normal(size=(3, 4)))]),
        ("sigmoid", lambda a: tsum(sigmoid(a) * wx), [rng.normal(size=(3, 4))]),
        ("mean/reshape/transpose/index", lambda a: tsum(mean(a.reshape(4, 3).transpose(1, 0)[1:], axis=0)
                                                        * Tensor([1.0, -2.0, 0.5, 3.0])),
         [rng.normal(size=(3, 4))]),
        ("concat", lambda a, b: tsum(concat([a, b], axis=0) ** 2), [rng.normal(size=(1, 4)),
                                                                   rng.normal(size=(2, 4))]),
        ("conv2d", lambda x, k, b: tsum(conv2d(x, k, b, 1) * wc), [rng.normal(size=(2, 4, 4)),
                                                                   rng.normal(size=(3, 2, 3, 3)),
                                                                   rng.normal(size=3)]),
        ("transposed_conv2d", lambda x, k: tsum(transposed_conv2d(x, k, 2) * wt),
         [rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 2, 2, 2))]),
        ("pixel_shuffle", lambda x: tsum(pixel_shuffle(x, 2) * ws), [rng.normal(size=(8, 2, 1))]),
        ("softmax", lambda x: tsum(softmax_channels(x) * wl), [rng.normal(size=(4, 3, 3))]),
        ("layer_norm", lambda x, g, o: tsum(layer_norm(x, g, o) * wl),
         [rng.normal(size=(4, 3, 3)), rng.normal(size=4), rng.normal(size=4)]),
        ("channel_attention", lambda *a: tsum(channel_attention(*a) * wa),
         [rng.normal(size=(8, 2, 2)), rng.normal(size=(2, 8, 1, 1)), rng.normal(size=2) + 3.0,
          rng.normal(size=(8, 2, 1, 1)), rng.normal(size=8)]),
        ("spectral_angle", lambda a, b: spectral_angle(a, b).mean(),
         [rng.uniform(0.1, 1, size=(5, 2, 2)), rng.uniform(0.1, 1, size=(5, 2, 2))]),
    ]


def _gram_error(seed: int) -> float:
    """Relative FD error of sum(w · GRAM(x)) w.r.t. x and every GRAM parameter."""
    rng = np.random.default_rng(seed)
    block = Gram(GramConfig(4, 3, 4))
    block.initialize(seed)
    params = block.parameters()
    for p in params:  # random biases too, so no ReLU sits exactly at its kink
        p.value = p.value + rng.normal(scale=0.3, size=p.shape)
    x = rng.normal(size=(4, 3, 3))
    weights = Tensor(rng.normal(size=(4, 3, 3)))
    arrays = [x] + [p.value.copy() for p in params]

    for p, v in zip(params, arrays[1:]):
        p.value = v.copy()
        p.zero_grad()
    xt = Tensor(x.copy(), requires_grad=True)
    backward(tsum(block(xt) * weights))
    analytic = [xt.grad.copy()] + [p.grad.copy() for p in params]
    worst = 0.0
    for k, arr in enumerate(arrays):
        def f(v, k=k):
            vals = [a.copy() for a in arrays]
            vals[k] = v
            for p, val in zip(params, vals[1:]):
                p.value = val
            with no_grad():
                return tsum(block(Tensor(vals[0])) * weights).item()
        worst = max(worst, oracles.rel_error(analytic[k], oracles.numeric_grad(f, arr.copy())))
    return worst


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    worst, worst_name = 0.0, ""
    for seed in range(20):
        for name, build, arrays in _primitive_cases(np.random.default_rng(seed)):
            err = oracles.check_gradients(build, arrays, h=1e-5)
            if err > worst:
                worst, worst_name = err, name
        err = _gram_error(seed)
        if err > worst:
            worst, worst_name = err, "GRAM"
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    record(1, ok, f"max rel err {worst:.2e} ({worst_name}) over 20 seeds, {elapsed:.1f}s (< 1e-4, < 60s)")
    assert ok


# 2 -------------------------------------------------------------------------------------------------
def test_criterion_2_constraints(step_one_run):
    _, worst, _ = step_one_run
    ok = worst["asc"] <= 1e-12 and worst["anc_min"] >= 0 and worst["decoder_min"] >= 0 and worst["steps"] == 1500
    record(2, ok, f"{worst['steps']} steps: max ASC err {worst['asc']:.1e}, min abundance {worst['anc_min']:.1e}, "
                  f"min decoder weight {worst['decoder_min']:.2e}")
    assert ok


# 3 -------------------------------------------------------------------------------------------------
def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    worst: dict[str, float] = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for seed in range(50):
        rng = np.random.default_rng(seed)
        x, k, b = rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
        note("conv2d", np.max(np.abs(conv2d(Tensor(x), Tensor(k), Tensor(b), 1).value
                                     - oracles.conv2d_loop(x, k, b, 1))))
        s = int(rng.integers(1, 4))
        xt, kt = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3, 3))
        note("transposed_conv", np.max(np.abs(transposed_conv2d(Tensor(xt), Tensor(kt), s).value
                                              - oracles.transposed_conv_loop(xt, kt, s))))
        hr = rng.uniform(size=(3, 12, 12))
        sigma = float(rng.uniform(0, 1.5))
        ref = np.clip(oracles.box_mean_loop(oracles.gaussian_blur_loop(hr, sigma), 2), 0, 1)
        note("degrade", np.max(np.abs(degrade(HsiCube(hr), 2, sigma).data - ref)))

        r, e = rng.uniform(0.05, 1, size=(3, 12, 12)), rng.uniform(0.05, 1, size=(3, 12, 12))
        note("psnr", abs(psnr(r, e) - oracles.psnr_loop(r, e)))
        note("ssim", abs(ssim(r, e) - oracles.ssim_loop(r, e)))
        note("sam", abs(sam(r, e) - oracles.sam_loop(r, e)))
        note("ergas", abs(ergas(r, e, 2) - oracles.ergas_loop(r, e, 2)))

        l1_ref = sum(abs(a - c) for a, c in zip(r.ravel(), e.ravel())) / r.size
        sad_ref = sum(oracles.angle_loop(r[:, i, j], e[:, i, j]) for i in range(12) for j in range(12)) / 144
        m = rng.uniform(0.1, 1, size=(3, 6))
        tv_ref = sum(abs(m[i, j + 1] - m[i, j]) for i in range(3) for j in range(5)) / 15
        note("unloss_l1", abs(unloss_l1(r, e).item() - l1_ref))
        note("unloss_sad", abs(unloss_sad(r, e).item() - sad_ref))
        note("unloss_tv", abs(unloss_tv(m).item() - tv_ref))
        note("unloss_total", abs(unloss_total(r, e, m).item() - (l1_ref + 0.1 * sad_ref + 1e-3 * tv_ref)))
        note("sr_loss_l1", abs(sr_loss_l1(r, e).item() - l1_ref))
        note("sr_loss_sad", abs(sr_loss_sad(r, e).item() - sad_ref))
        a_lr = rng.dirichlet(np.ones(3), size=(3, 3)).transpose(2, 0, 1)
        a_sr = rng.dirichlet(np.ones(3), size=(6, 6)).transpose(2, 0, 1)
        ab_ref = sum(abs(a_sr[c, i, j] - a_lr[c, i // 2, j // 2])
                     for c in range(3) for i in range(6) for j in range(6)) / a_sr.size
        note("abun_loss", abs(abun_loss(a_sr, a_lr, 2).item() - ab_ref))
        y_hr, y_sr = rng.uniform(size=(3, 6, 6)), rng.uniform(size=(3, 6, 6))
        sr_ref = (sum(abs(p - q) for p, q in zip(y_hr.ravel(), y_sr.ravel())) / y_hr.size
                  + 0.1 * sum(oracles.angle_loop(y_hr[:, i, j], y_sr[:, i, j]) for i in range(6) for j in range(6)) / 36
                  + 0.2 * ab_ref)
        note("sr_loss_total", abs(sr_loss_total(y_hr, y_sr, a_sr, a_lr).item() - sr_ref))

    elapsed = time.perf_counter() - t0
    # metrics: psnr/ergas 1e-10, sam 1e-8 degrees, ssim 1e-8; everything else 1e-8 or tighter
    tol = {"psnr": 1e-10, "ergas": 1e-10, "sam": 1e-8, "ssim": 1e-8}
    bad = [n for n, v in worst.items() if v > tol.get(n, 1e-8)]
    ok = not bad and elapsed < 120
    top = max(worst, key=worst.get)
    record(3, ok, f"{len(worst)} ops × 50 instances, worst {top} {worst[top]:.1e}, {elapsed:.1f}s"
                  + (f", failing {bad}" if bad else ""))
    assert ok


# 4 -------------------------------------------------------------------------------------------------
def test_criterion_4_unmixing_recovery(standard_scene, step_one_run):
    _, endmembers, cube = standard_scene
    result, _, elapsed = step_one_run
    _, yhat = result.network.unmix(cube)
    rmse = reconstruction_rmse(cube.data, yhat.data)
    _, angle = match_endmembers(endmembers, result.network.extract_endmembers())
    ok = rmse < 0.02 and angle < 0.15 and elapsed < 180 and len(result.history) <= 30
    record(4, ok, f"RMSE {rmse:.4f} (< 0.02), endmember angle {angle:.4f} rad (< 0.15), "
                  f"{len(result.history)} epochs in {elapsed:.1f}s (< 180s)")
    assert ok


# 5 -------------------------------------------------------------------------------------------------
def test_criterion_5_scale_consistency(standard_scene, step_one_run):
    _, _, cube = standard_scene
    net = step_one_run[0].network
    lr = degrade(cube, 2, blur_sigma=0.0)
    a_lr, _ = net.unmix(lr)
    a_hr, _ = net.unmix(cube)
    gap = float(np.mean(np.abs(a_lr.data - block_average(a_hr.data, 2))))
    ok = gap < 0.05
    record(5, ok, f"mean |enc(Y_LR) - blockavg(enc(Y_HR))| = {gap:.4f} (< 0.05)")
    assert ok


# 6 -------------------------------------------------------------------------------------------------
def test_criterion_6_sr_beats_bicubic(sr_pairs, sr_step_one, sr_full_run):
    _, held = sr_pairs
    (result, t2), t1 = sr_full_run, sr_step_one[1]
    report, _ = evaluate_pair(result.network, sr_step_one[0].network, held)
    bic = HsiCube(bicubic_upsample(held.lr.data, 2))
    gain = report.psnr - psnr(held.hr, bic)
    sam_bic = sam(held.hr, bic)
    ok = gain >= 0.5 and report.sam < sam_bic and t1 + t2 < 600 and len(result.history) == 30
    record(6, ok, f"PSNR {report.psnr:.3f} vs bicubic {report.psnr - gain:.3f} (+{gain:.3f} dB, need 0.5), "
                  f"SAM {report.sam:.3f} vs {sam_bic:.3f} deg, {t1 + t2:.0f}s (< 600s)")
    assert ok


# 7 -------------------------------------------------------------------------------------------------
def test_criterion_7_ablation_direction(sr_pairs, sr_step_one, sr_full_run, sr_baseline_run):
    _, held = sr_pairs
    unmix = sr_step_one[0].network
    full, ab_full = evaluate_pair(sr_full_run[0].network, unmix, held)
    base, ab_base = evaluate_pair(sr_baseline_run[0].network, unmix, held)
    ok = ab_full < ab_base and full.psnr >= base.psnr - 0.1
    record(7, ok, f"abun_loss {ab_full:.4f} (MAM+AbunLoss) vs {ab_base:.4f} (baseline); "
                  f"PSNR {full.psnr:.3f} vs {base.psnr:.3f} (drop <= 0.1 dB)")
    assert ok


# 8 -------------------------------------------------------------------------------------------------
def test_criterion_8_determinism_and_formats(tmp_path):
    problems = []
    rng = np.random.default_rng(0)
    cube = HsiCube(rng.uniform(size=(5, 7, 9)).astype(np.float32).astype(np.float64))
    save_hsc(cube, tmp_path / "c.hsc")
    if not np.array_equal(load_hsc(tmp_path / "c.hsc").data, cube.data):
        problems.append("HSC1 roundtrip")

    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert cli.main(["synth", "--p", "3", "--size", "16", "--bands", "8", "--seed", "7",
                         "--out", str(d / "scene")]) == 0
        (d / "run.cfg").write_text("scale=2\np=3\nwidth=8\ngram_count=1\nunmix_width=8\nunmix_grams=1\n"
                                   "epochs_step1=2\nepochs_step2=2\nsteps_per_epoch=3\npatch=8\n"
                                   "paths=scene/hr.hsc\nout_dir=out\n")
        assert cli.main(["train", "--config", str(d / "run.cfg")]) == 0
        assert cli.main(["degrade", "--in", str(d / "scene/hr.hsc"), "--scale", "2", "--noise", "0.01",
                         "--out", str(d / "lr.hsc")]) == 0
        assert cli.main(["unmix", "--ckpt", str(d / "out/unmix.ckpt"), "--in", str(d / "lr.hsc"),
                         "--out", str(d / "a.abn")]) == 0
        assert cli.main(["sr", "--ckpt", str(d / "out/sr.ckpt"), "--in", str(d / "lr.hsc"),
                         "--out", str(d / "sr.hsc")]) == 0
        names = ["scene/hr.hsc", "scene/abundances.abn", "scene/endmembers.csv", "out/unmix.ckpt",
                 "out/sr.ckpt", "out/step1.csv", "out/step2.csv", "lr.hsc", "a.abn", "sr.hsc"]
        outputs.append({n: (d / n).read_bytes() for n in names})
    for name in outputs[0]:
        if outputs[0][name] != outputs[1][name]:
            problems.append(f"{name} differs between runs")
    Checkpoint.from_bytes(outputs[0]["out/sr.ckpt"])

    lrs = [lr_schedule(e) for e in (0, 40, 80)]
    if lrs != [5e-4, 2.5e-4, 1.25e-4]:
        problems.append(f"lr schedule {lrs}")
    ok = not problems
    record(8, ok, "byte-identical checkpoints/HSC1/ABN1/CSV across runs, HSC1 roundtrip exact, "
                  f"lr(0/40/80) = {lrs}" + (f"; problems: {problems}" if problems else ""))
    assert ok
