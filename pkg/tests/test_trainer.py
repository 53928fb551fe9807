import csv

import numpy as np
import pytest

from unmixingsr.checkpoint import Checkpoint
from unmixingsr.engine import Adam, Tensor
from unmixingsr.errors import CheckpointError, ConfigurationError, NumericalError
from unmixingsr.hsi import HsiCube, block_average, make_pair, synth_scene
from unmixingsr.trainer import (CSV_HEADER, TrainConfig, _run_epochs, lr_schedule, params_digest,
                                patch_sampler, sr_from_checkpoint, train_step_one, train_step_two,
                                unmixing_from_checkpoint)
from unmixingsr.unmixing import UnmixingConfig, UnmixingNetwork

TINY = TrainConfig(unmix_width=8, unmix_grams=1, width=8, gram_count=1, epochs_step1=2, epochs_step2=2,
                   steps_per_epoch=3, patch=8)


@pytest.fixture(scope="module")
def tiny_pairs():
    pairs = []
    for seed in (1, 2):
        a, m, y = synth_scene(3, 16, 16, 8, seed=seed)
        pairs.append(make_pair(y, 2, seed=seed, abundances=a, endmembers=m))
    return pairs


# --- schedule -------------------------------------------------------------------
def test_lr_schedule_values():
    assert [lr_schedule(e) for e in (0, 39, 40, 80, 119)] == [5e-4, 5e-4, 2.5e-4, 1.25e-4, 1.25e-4]
    with pytest.raises(ConfigurationError):
        lr_schedule(-1)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(patch=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(beta_ab=-1.0)
    assert "beta_ab=0.2" in TrainConfig().to_text()


# --- patch sampler ----------------------------------------------------------------
def test_sampler_alignment():
    hr = HsiCube(np.random.default_rng(0).uniform(size=(3, 24, 20)))
    pair = make_pair(hr, 2, blur_sigma=0.0)
    stream = patch_sampler(pair, 4, seed=3)
    for _ in range(20):
        lr_patch, hr_patch = next(stream)
        assert lr_patch.shape == (3, 4, 4) and hr_patch.shape == (3, 8, 8)
        assert np.allclose(block_average(hr_patch, 2), lr_patch, rtol=0, atol=1e-15)


def test_sampler_deterministic():
    pair = make_pair(HsiCube(np.random.default_rng(1).uniform(size=(2, 16, 16))), 2)
    a, b = patch_sampler(pair, 3, seed=5), patch_sampler(pair, 3, seed=5)
    for _ in range(10):
        x, y = next(a), next(b)
        assert np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])


def test_sampler_full_image():
    pair = make_pair(HsiCube(np.random.default_rng(2).uniform(size=(2, 8, 8))), 2)
    lr_patch, hr_patch = next(patch_sampler(pair, 4))
    assert np.array_equal(lr_patch, pair.lr.data) and np.array_equal(hr_patch, pair.hr.data)


def test_sampler_x4_patch16():
    pair = make_pair(HsiCube(np.full((2, 80, 80), 0.5)), 4)
    lr_patch, hr_patch = next(patch_sampler(pair, 16, 4))
    assert lr_patch.shape[1:] == (16, 16) and hr_patch.shape[1:] == (64, 64)


def test_sampler_errors():
    pair = make_pair(HsiCube(np.full((2, 8, 8), 0.5)), 2)
    with pytest.raises(ConfigurationError):
        next(patch_sampler(pair, 5))
    with pytest.raises(ConfigurationError):
        next(patch_sampler(pair, 2, n=4))


# --- step I -----------------------------------------------------------------------
def test_step_one_deterministic(tiny_pairs, tmp_path):
    cubes = [p.lr for p in tiny_pairs]
    a = train_step_one(cubes, TINY, log_path=tmp_path / "a.csv")
    b = train_step_one(cubes, TINY, log_path=tmp_path / "b.csv")
    assert a.checkpoint.to_bytes() == b.checkpoint.to_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = train_step_one(cubes, TINY.replace(seed=1))
    assert a.checkpoint.to_bytes() != c.checkpoint.to_bytes()


def test_step_one_log(tiny_pairs, tmp_path):
    train_step_one([p.lr for p in tiny_pairs], TINY, log_path=tmp_path / "s.csv")
    rows = list(csv.reader((tmp_path / "s.csv").open()))
    assert tuple(rows[0]) == CSV_HEADER
    assert [r[:2] for r in rows[1:]] == [["0", "3"], ["1", "6"]]


def test_step_one_accumulation(tiny_pairs):
    result = train_step_one([p.lr for p in tiny_pairs], TINY.replace(accumulate=2))
    assert result.optimizer.state.t == 6


def test_step_one_rejects_mixed_bands():
    with pytest.raises(ConfigurationError):
        train_step_one([HsiCube(np.ones((4, 8, 8))), HsiCube(np.ones((5, 8, 8)))], TINY)


@pytest.mark.slow
def test_step_one_loss_decreases(step_one_run):
    history = step_one_run[0].history
    assert history[10]["loss_total"] < history[0]["loss_total"]


@pytest.mark.slow
def test_step_one_beats_rank_deficient_fit(standard_scene, step_one_run):
    _, _, cube = standard_scene
    _, yhat = step_one_run[0].network.unmix(cube)
    trained = np.sqrt(np.mean((cube.data - yhat.data) ** 2))
    flat = cube.data.reshape(cube.bands, -1)
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    rank2 = (u[:, :2] * s[:2]) @ vt[:2]
    assert trained < np.sqrt(np.mean((flat - rank2) ** 2))


def test_non_finite_loss_raises():
    net = UnmixingNetwork(UnmixingConfig(4, 2, 4, 0))
    opt = Adam(net.named_parameters())
    nan = Tensor(np.nan)
    with pytest.raises(NumericalError, match="parameter norms"):
        _run_epochs(net, opt, TINY, 1, lambda: {"total": nan, "l1": nan, "sad": nan, "aux": nan}, None, None)


# --- step II ----------------------------------------------------------------------
def test_step_two_freezes_unmixing(tiny_pairs):
    step1 = train_step_one([p.lr for p in tiny_pairs], TINY)
    before = params_digest(step1.network)
    step2 = train_step_two(tiny_pairs, step1.network, TINY)
    assert params_digest(step1.network) == before
    assert step2.frozen_digests == [before] * 3
    assert all(p.trainable for p in step1.network.parameters())


def test_step_two_from_checkpoint_matches_network(tiny_pairs):
    step1 = train_step_one([p.lr for p in tiny_pairs], TINY)
    a = train_step_two(tiny_pairs, step1.network, TINY)
    b = train_step_two(tiny_pairs, Checkpoint.from_bytes(step1.checkpoint.to_bytes()), TINY)
    assert a.checkpoint.to_bytes() == b.checkpoint.to_bytes()


def test_step_two_learned_deconv(tiny_pairs):
    step1 = train_step_one([p.lr for p in tiny_pairs], TINY)
    result = train_step_two(tiny_pairs, step1.network, TINY.replace(deconv_mode="learned"))
    assert "deconv" in result.checkpoint.params


def test_step_two_mismatches(tiny_pairs):
    step1 = train_step_one([p.lr for p in tiny_pairs], TINY)
    with pytest.raises(ConfigurationError):
        train_step_two(tiny_pairs, step1.network, TINY.replace(p=4))
    with pytest.raises(ConfigurationError):
        train_step_two(tiny_pairs, step1.network, TINY.replace(scale=4))


@pytest.mark.slow
def test_step_two_loss_decreases(sr_full_run):
    history = sr_full_run[0].history
    assert history[10]["loss_total"] < history[0]["loss_total"]
    assert len(set(sr_full_run[0].frozen_digests)) == 1


# --- checkpoints ----------------------------------------------------------------------
def test_checkpoint_roundtrip(tiny_pairs, tmp_path):
    step1 = train_step_one([p.lr for p in tiny_pairs], TINY)
    step1.checkpoint.save(tmp_path / "u.ckpt")
    loaded = Checkpoint.load(tmp_path / "u.ckpt")
    assert loaded.to_bytes() == step1.checkpoint.to_bytes()
    assert loaded.adam_t == 6 and loaded.epoch == 2
    net = unmixing_from_checkpoint(loaded)
    assert params_digest(net) == params_digest(step1.network)
    opt = Adam(net.named_parameters())
    opt.load_state(loaded.adam_m, loaded.adam_v, loaded.adam_t)
    assert opt.state.t == 6
    with pytest.raises(ConfigurationError):
        sr_from_checkpoint(loaded)


def test_checkpoint_corruption(tiny_pairs, tmp_path):
    raw = train_step_one([p.lr for p in tiny_pairs], TINY).checkpoint.to_bytes()
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(raw[:-3])
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(raw + b"\0")
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "missing.ckpt")
