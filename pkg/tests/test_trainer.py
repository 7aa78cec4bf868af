import math

import numpy as np
import pytest
import torch

from neurodenoise.config import ConfigError, ModelConfig, TrainingConfig
from neurodenoise.losses import LossWeights
from neurodenoise.model import SpikingFullSubNet
from neurodenoise.trainer import (Trainer, TrainingError, bptt_step, clip_grad_norm, evaluate,
                                  grad_check, make_optimizer)


def _two_tone_pairs(cfg, n_pairs=8, n_frames=40, seed=0):
    rng = np.random.default_rng(seed)
    L = cfg.stft.n_samples(n_frames)
    t = np.arange(L)
    # bins 3 and 6 of the tiny 32-point STFT
    pairs = []
    for _ in range(n_pairs):
        clean = 0.3 * np.sin(2 * np.pi * 3 / 32 * t + rng.uniform(0, 2 * np.pi)) \
            + 0.2 * np.sin(2 * np.pi * 6 / 32 * t + rng.uniform(0, 2 * np.pi))
        pairs.append((clean + 0.15 * rng.standard_normal(L), clean))
    return pairs


def _batch(cfg, seed=0, n_frames=10):
    rng = np.random.default_rng(seed)
    L = cfg.stft.n_samples(n_frames)
    clean = rng.standard_normal((2, L)) * 0.3
    return clean + rng.standard_normal((2, L)) * 0.2, clean


def test_clip_scales_norm_100_to_10():
    p = torch.nn.Parameter(torch.zeros(4))
    p.grad = torch.tensor([60.0, 80.0, 0.0, 0.0])
    assert clip_grad_norm([p], 10.0) == pytest.approx(100.0)
    assert float(p.grad.norm()) == pytest.approx(10.0, abs=1e-9)
    torch.testing.assert_close(p.grad, torch.tensor([6.0, 8.0, 0.0, 0.0]))


def test_clip_leaves_small_gradients():
    p = torch.nn.Parameter(torch.zeros(2))
    p.grad = torch.tensor([0.3, 0.4])
    assert clip_grad_norm([p], 10.0) == pytest.approx(0.5)
    torch.testing.assert_close(p.grad, torch.tensor([0.3, 0.4]))


def test_zero_weight_smoke_step(tiny_cfg):
    model = SpikingFullSubNet(tiny_cfg)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    noisy, _ = _batch(tiny_cfg)
    batch = (torch.tensor(noisy, dtype=torch.float32), torch.zeros(2, noisy.shape[1]))
    cfg = TrainingConfig()
    opt = make_optimizer(model, cfg)
    # all-zero targets have no SI-SDR reference, so score the TF term only
    loss = bptt_step(model, batch, opt, cfg, LossWeights(gamma2=0.0))
    assert math.isfinite(loss)
    assert all(torch.isfinite(p.grad).all() for p in model.parameters() if p.grad is not None)


def test_nan_input_aborts(tiny_model):
    noisy, clean = _batch(tiny_model.cfg)
    noisy[0, 5] = np.nan
    cfg = TrainingConfig()
    with pytest.raises(TrainingError, match="non-finite"):
        bptt_step(tiny_model, (torch.tensor(noisy, dtype=torch.float32),
                               torch.tensor(clean, dtype=torch.float32)),
                  make_optimizer(tiny_model, cfg), cfg, tiny_model.cfg.loss)


def test_loss_descends_on_two_tone_task(tiny_cfg):
    torch.manual_seed(0)
    model = SpikingFullSubNet(tiny_cfg)
    pairs = _two_tone_pairs(tiny_cfg)
    cfg = TrainingConfig(learning_rate=3e-3, max_epochs=4, steps_per_epoch=50, segment_s=0)
    hist = Trainer(model, cfg).fit(pairs)
    means = [h.loss for h in hist[1:]]
    assert sum(h.steps for h in hist) == 200
    assert all(b < a for a, b in zip(means, means[1:])), means


def _trajectory(tiny_cfg, seed):
    torch.manual_seed(123)
    model = SpikingFullSubNet(tiny_cfg)
    cfg = TrainingConfig(max_epochs=2, steps_per_epoch=5, segment_s=0, seed=seed)
    return [h.loss for h in Trainer(model, cfg).fit(_two_tone_pairs(tiny_cfg))[1:]]


def test_fixed_seed_reproduces_trajectory(tiny_cfg):
    assert _trajectory(tiny_cfg, 7) == _trajectory(tiny_cfg, 7)
    assert _trajectory(tiny_cfg, 7) != _trajectory(tiny_cfg, 8)


def test_time_budget_stops_training(tiny_model):
    cfg = TrainingConfig(max_epochs=1000, steps_per_epoch=5, segment_s=0, time_budget_s=0.5)
    hist = Trainer(tiny_model, cfg).fit(_two_tone_pairs(tiny_model.cfg))
    assert hist[-1].epoch < 1000


def test_evaluate_reports_improvement(tiny_model):
    pairs = _two_tone_pairs(tiny_model.cfg, n_pairs=3)
    m = evaluate(tiny_model, pairs)
    assert m["si_snr_i"] == pytest.approx(m["si_snr"] - m["si_snr_noisy"])


def test_grad_check_full_pipeline(tiny_model):
    res = grad_check(tiny_model, _batch(tiny_model.cfg), eps=1e-4, n_params=200)
    assert res.n_checked >= 200
    assert res.max_rel_error < 1e-4, res.worst
    modules = set(res.per_module)
    assert any(m.startswith("fullband.layers") for m in modules)
    assert any(m.startswith("subband") and "readout" not in m for m in modules)
    assert any("readout" in m for m in modules)


def test_grad_check_catches_corrupted_gradient(tiny_model):
    res = grad_check(tiny_model, _batch(tiny_model.cfg), n_params=40,
                     grad_transform=lambda name, g: g * 1.05)
    assert res.max_rel_error > 1e-2


def test_grad_check_quadratic_readout_is_exact(tiny_model):
    def quad(m, noisy, clean):
        return sum((p ** 2).sum() + 0.5 * p.sum() for n, p in m.named_parameters() if "readout" in n)

    res = grad_check(tiny_model, _batch(tiny_model.cfg), n_params=50,
                     param_filter=lambda n: "readout" in n, loss_fn=quad)
    assert res.n_checked == 50
    assert res.max_rel_error < 1e-6


def test_desk_presets():
    mcfg, tcfg = ModelConfig.desk(), TrainingConfig.desk()
    assert mcfg.theta == 0.5
    assert tcfg.max_epochs * tcfg.steps_per_epoch == 1600
    assert tcfg.lr_schedule == "cosine"
    assert tcfg.time_budget_s <= 600


def test_cosine_schedule_reaches_zero(tiny_model):
    cfg = TrainingConfig(max_epochs=2, steps_per_epoch=3, segment_s=0, lr_schedule="cosine")
    tr = Trainer(tiny_model, cfg)
    tr.fit(_two_tone_pairs(tiny_model.cfg, n_pairs=2))
    assert tr.optimizer.param_groups[0]["lr"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigError):
        TrainingConfig(lr_schedule="step")
