"""BPTT training with surrogate gradients, AdamW and global-norm clipping; gradient checking."""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .config import TrainingConfig
from .losses import LossWeights, si_sdr, synops_penalty, total_loss
from .model import SpikingFullSubNet
from .spectral import SAMPLE_RATE, StftConfig, istft_torch, stft_torch

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    norm = math.sqrt(sum(float(g.double().pow(2).sum()) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.mul_(scale)
    return norm


def forward_loss(model: SpikingFullSubNet, noisy: torch.Tensor, clean: torch.Tensor,
                 weights: LossWeights):
    """Waveforms (B, L) -> (loss, model output, estimated waveform)."""
    cfg: StftConfig = model.cfg.stft
    noisy_spec = stft_torch(noisy, cfg)
    clean_spec = stft_torch(clean, cfg)
    out = model(noisy_spec)
    est_wav = istft_torch(out.est, cfg)
    ref_wav = clean[..., :est_wav.shape[-1]]
    penalty = None
    if weights.synops_weight:
        spiking = [t for t in model.topology() if t.spiking]
        penalty = synops_penalty([out.runs[t.name].spikes for t in spiking], spiking)
        penalty = penalty / noisy.shape[0]
    loss = total_loss(clean_spec[..., 1:], ref_wav, out.est[..., 1:], est_wav, weights, penalty)
    return loss, out, est_wav


def bptt_step(model: SpikingFullSubNet, batch, optimizer, cfg: TrainingConfig,
              weights: LossWeights) -> float:
    noisy, clean = batch
    optimizer.zero_grad(set_to_none=True)
    loss, _, _ = forward_loss(model, noisy, clean, weights)
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss.item()}; input rms "
                            f"{float(noisy.pow(2).mean().sqrt()):.3g}")
    loss.backward()
    norm = clip_grad_norm(model.parameters(), cfg.grad_clip_norm)
    if not math.isfinite(norm):
        raise TrainingError("non-finite gradient norm")
    optimizer.step()
    return loss.item()


def make_optimizer(model, cfg: TrainingConfig):
    return torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                             weight_decay=cfg.weight_decay)


@torch.no_grad()
def evaluate(model: SpikingFullSubNet, pairs: Sequence, batch_size: int = 8) -> dict:
    """Mean SI-SNR of the estimate and its improvement over the noisy input."""
    cfg = model.cfg.stft
    est_db, noisy_db = [], []
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i:i + batch_size]
        noisy = torch.tensor(np.stack([p[0] for p in chunk]), dtype=torch.float32)
        clean = torch.tensor(np.stack([p[1] for p in chunk]), dtype=torch.float32)
        out = model(stft_torch(noisy, cfg))
        est = istft_torch(out.est, cfg).double()
        L = est.shape[-1]
        ref = clean[..., :L].double()
        est_db += si_sdr(ref, est).tolist()
        noisy_db += si_sdr(ref, noisy[..., :L].double()).tolist()
    est_db, noisy_db = np.array(est_db), np.array(noisy_db)
    return {"si_snr": float(est_db.mean()), "si_snr_noisy": float(noisy_db.mean()),
            "si_snr_i": float((est_db - noisy_db).mean())}


@dataclass
class EpochLog:
    epoch: int
    loss: float
    si_snr: float
    si_snr_i: float
    steps: int
    seconds: float


@dataclass
class Trainer:
    model: SpikingFullSubNet
    cfg: TrainingConfig = field(default_factory=TrainingConfig)
    weights: Optional[LossWeights] = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.weights is None:
            self.weights = self.model.cfg.loss
        self.model.set_spike_mode(self.cfg.mode)
        self.optimizer = make_optimizer(self.model, self.cfg)
        self.scheduler = None
        if self.cfg.lr_schedule == "cosine":
            total = max(1, self.cfg.max_epochs * self.cfg.steps_per_epoch)
            self.scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(self.optimizer, total)
        self.rng = np.random.default_rng(self.cfg.seed)

    def sample_batch(self, pairs: Sequence):
        idx = self.rng.integers(len(pairs), size=self.cfg.batch_size)
        L = min(len(pairs[i][0]) for i in idx)
        seg = int(self.cfg.segment_s * SAMPLE_RATE) if self.cfg.segment_s else L
        seg = min(seg, L)
        noisy, clean = [], []
        for i in idx:
            off = int(self.rng.integers(len(pairs[i][0]) - seg + 1))
            n, c = pairs[i][0][off:off + seg], pairs[i][1][off:off + seg]
            if self.cfg.crop_rms_dbfs is not None:
                # the model is scale-equivariant; this only evens out loss weight across crops
                g = 10 ** (self.cfg.crop_rms_dbfs / 20) / (np.sqrt(np.mean(n * n)) + 1e-12)
                n, c = n * g, c * g
            noisy.append(n)
            clean.append(c)
        return (torch.tensor(np.stack(noisy), dtype=torch.float32),
                torch.tensor(np.stack(clean), dtype=torch.float32))

    def fit(self, train_pairs: Sequence, eval_pairs: Sequence = (),
            on_epoch: Optional[Callable[[EpochLog], None]] = None) -> list[EpochLog]:
        """Train for cfg.max_epochs epochs of cfg.steps_per_epoch steps (or until the time budget)."""
        torch.manual_seed(self.cfg.seed)
        start = time.perf_counter()
        if not self.history:
            self._log_epoch(0, float("nan"), 0, start, eval_pairs, on_epoch)
        for epoch in range(1, self.cfg.max_epochs + 1):
            self.model.train()
            losses = []
            for _ in range(self.cfg.steps_per_epoch):
                batch = self.sample_batch(train_pairs)
                losses.append(bptt_step(self.model, batch, self.optimizer, self.cfg, self.weights))
                if self.scheduler is not None:
                    self.scheduler.step()
                if self.cfg.time_budget_s and time.perf_counter() - start > self.cfg.time_budget_s:
                    break
            self._log_epoch(epoch, float(np.mean(losses)), len(losses), start, eval_pairs, on_epoch)
            if self.cfg.time_budget_s and time.perf_counter() - start > self.cfg.time_budget_s:
                log.info("time budget reached after epoch %d", epoch)
                break
        return self.history

    def _log_epoch(self, epoch, loss, steps, start, eval_pairs, on_epoch):
        self.model.eval()
        metrics = evaluate(self.model, eval_pairs) if len(eval_pairs) else \
            {"si_snr": float("nan"), "si_snr_i": float("nan")}
        entry = EpochLog(epoch, loss, metrics["si_snr"], metrics["si_snr_i"], steps,
                         time.perf_counter() - start)
        self.history.append(entry)
        log.info("epoch %d loss %.4f si_snr %.2f si_snr_i %.2f", epoch, loss,
                 entry.si_snr, entry.si_snr_i)
        if on_epoch:
            on_epoch(entry)


# -- gradient checking ---------------------------------------------------------

@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    per_module: dict
    worst: tuple = ()
    per_tensor: dict = field(default_factory=dict)


def _kink_signature(runs: dict) -> torch.Tensor:
    """Which piece of the relaxed spike each (neuron, step) sits on."""
    v = torch.cat([r.v.reshape(-1) for r in runs.values()])
    return (v >= -1).int() + (v >= 0).int() + (v >= 1).int()


def _kink_margin(runs: dict) -> float:
    v = torch.cat([r.v.reshape(-1) for r in runs.values()])
    return float(torch.min(torch.stack([(v + 1).abs().min(), v.abs().min(), (v - 1).abs().min()])))


def grad_check(model: SpikingFullSubNet, batch, eps: float = 1e-4, n_params: int = 200,
               seed: int = 0, weights: Optional[LossWeights] = None,
               param_filter: Optional[Callable[[str], bool]] = None,
               loss_fn: Optional[Callable] = None,
               grad_transform: Optional[Callable[[str, torch.Tensor], torch.Tensor]] = None
               ) -> GradCheckResult:
    """Compare autograd gradients with central differences in relaxed-spike mode.

    Relative error is |a - n| / max(|a|, |n|, floor) with the floor at 1e-5
    of the RMS analytic gradient. Parameters are sampled evenly across
    parameter tensors. A sample is
    skipped when either perturbation moves any neuron across a kink of the
    relaxed spike (|v|, |v -+ 1| changing piece), or moves any enhanced bin
    by more than a tenth of its magnitude (|s| is not smooth at zero). The
    derivative estimate is the fourth-order central stencil.
    """
    weights = weights or model.cfg.loss
    m = copy.deepcopy(model).double()
    m.set_spike_mode("relaxed")
    noisy, clean = (torch.as_tensor(b, dtype=torch.float64) for b in batch)

    def run():
        if loss_fn is not None:
            return loss_fn(m, noisy, clean), {}, None
        loss, out, _ = forward_loss(m, noisy, clean, weights)
        return loss, out.runs, out.est[..., 1:].detach()

    named = [(n, p) for n, p in m.named_parameters() if param_filter is None or param_filter(n)]
    m.zero_grad()
    loss, runs, base_est = run()
    loss.backward()
    analytic = {n: p.grad.detach().clone() for n, p in named}
    if grad_transform is not None:
        analytic = {n: grad_transform(n, g) for n, g in analytic.items()}
    base_sig = _kink_signature(runs) if runs else None
    # gradients this far below the typical magnitude count as zero
    flat_all = torch.cat([g.reshape(-1) for g in analytic.values()])
    floor = max(1e-5 * float(flat_all.pow(2).mean().sqrt()), 1e-12)

    rng = np.random.default_rng(seed)
    worst, max_err, checked, skipped = (), 0.0, 0, 0
    per_module: dict[str, float] = {}
    per_tensor: dict[str, float] = {}
    # cycle over tensors in shuffled rounds until n_params samples are usable
    picks = (named[i] for _ in range(3 * n_params) for i in rng.permutation(len(named)))
    with torch.no_grad():
        for name, p in picks:
            if checked >= n_params or checked + skipped >= 3 * n_params:
                break
            flat = p.view(-1)
            j = int(rng.integers(flat.numel()))
            orig = float(flat[j])
            vals, sigs, near_zero = {}, [], False
            for step in (2, 1, -1, -2):
                flat[j] = orig + step * eps
                val, r, est = run()
                vals[step] = float(val)
                sigs.append(_kink_signature(r) if r else None)
                if est is not None:
                    near_zero |= bool(((est - base_est).abs() * 10 > base_est.abs()).any())
            flat[j] = orig
            if near_zero or (base_sig is not None
                             and not all(torch.equal(s, base_sig) for s in sigs)):
                skipped += 1
                continue
            # fourth-order central stencil
            numeric = (8 * (vals[1] - vals[-1]) - (vals[2] - vals[-2])) / (12 * eps)
            a = float(analytic[name].view(-1)[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            checked += 1
            module = name.rsplit(".", 1)[0]
            per_module[module] = max(per_module.get(module, 0.0), err)
            per_tensor[name] = max(per_tensor.get(name, 0.0), err)
            if err > max_err:
                max_err, worst = err, (name, j, a, numeric)
    return GradCheckResult(max_err, checked, skipped, per_module, worst, per_tensor)


def kink_margin(model: SpikingFullSubNet, batch, weights: Optional[LossWeights] = None) -> float:
    """Smallest distance of any relaxed-mode neuron state to a kink of the spike ramp."""
    m = copy.deepcopy(model).double()
    m.set_spike_mode("relaxed")
    noisy, clean = (torch.as_tensor(b, dtype=torch.float64) for b in batch)
    with torch.no_grad():
        _, out, _ = forward_loss(m, noisy, clean, weights or model.cfg.loss)
    return _kink_margin(out.runs)
