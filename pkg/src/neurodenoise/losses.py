"""Training objectives and SI-SNR metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .spectral import AudioBuffer, ComplexSpectrogram

SI_SDR_CAP_DB = 60.0
_TINY = 1e-30


class LossError(ValueError):
    pass


@dataclass
class LossWeights:
    alpha: float = 0.5
    gamma1: float = 0.5
    gamma2: float = 0.001
    synops_weight: float = 0.0
    si_sdr_cap_db: float = SI_SDR_CAP_DB

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise LossError("alpha must lie in [0, 1]")
        if min(self.gamma1, self.gamma2, self.synops_weight) < 0:
            raise LossError("loss weights must be non-negative")


def _tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    if isinstance(x, ComplexSpectrogram):
        return torch.as_tensor(x.frames)
    if isinstance(x, AudioBuffer):
        return torch.as_tensor(x.samples)
    return torch.as_tensor(np.asarray(x))


def loss_tf(clean, est, alpha: float = 0.5) -> torch.Tensor:
    """alpha * MSE(|s|, |s_hat|) + (1 - alpha) * (MSE(re) + MSE(im)), means over all bins."""
    s, e = _tensor(clean), _tensor(est)
    if s.shape != e.shape:
        raise LossError(f"shape mismatch {tuple(s.shape)} vs {tuple(e.shape)}")
    mag = (s.abs() - e.abs()).pow(2).mean()
    ri = (s.real - e.real).pow(2).mean() + (s.imag - e.imag).pow(2).mean()
    return alpha * mag + (1.0 - alpha) * ri


def si_sdr(clean, est, cap_db: float = SI_SDR_CAP_DB) -> torch.Tensor:
    """Scale-invariant SDR in dB over the last axis, clamped to +-cap_db."""
    s, e = _tensor(clean), _tensor(est)
    if s.shape != e.shape:
        raise LossError(f"length mismatch {tuple(s.shape)} vs {tuple(e.shape)}")
    ss = (s * s).sum(-1)
    if torch.any(ss == 0):
        raise LossError("clean reference is all zeros")
    proj = ((e * s).sum(-1) / ss).unsqueeze(-1) * s
    num = (proj * proj).sum(-1).clamp_min(_TINY)
    den = ((proj - e) ** 2).sum(-1).clamp_min(_TINY)
    db = 10.0 * (torch.log10(num) - torch.log10(den))
    # a silent estimate carries no signal at all: the worst score, not 0/0
    db = torch.where((e * e).sum(-1) == 0, torch.full_like(db, -cap_db), db)
    return db.clamp(-cap_db, cap_db)


def loss_sisdr(clean, est, cap_db: float = SI_SDR_CAP_DB) -> torch.Tensor:
    return -si_sdr(clean, est, cap_db).mean()


def si_snr(clean, est, cap_db: float = SI_SDR_CAP_DB) -> float:
    return float(si_sdr(clean, est, cap_db).mean())


def si_snr_i(noisy, clean, est, cap_db: float = SI_SDR_CAP_DB) -> float:
    return si_snr(clean, est, cap_db) - si_snr(clean, noisy, cap_db)


def synops_penalty(spike_traces, topology) -> torch.Tensor:
    """Sum of spikes times per-neuron fan-out over all spiking layers.

    In hard-spike mode the spike tensors carry the surrogate gradient, so the
    value equals the exact SynOPs count while staying differentiable.
    """
    total = torch.zeros(())
    for spikes, layer in zip(spike_traces, topology):
        fan = layer.ff_fanout + (layer.n_neurons if layer.has_recurrence else 0)
        total = total + spikes.sum() * fan
    return total


def total_loss(clean_spec, clean_wav, est_spec, est_wav, weights: LossWeights = LossWeights(),
               penalty=None) -> torch.Tensor:
    """gamma1 * L_TF + gamma2 * (100 - SI-SDR) + synops_weight * penalty."""
    loss = weights.gamma1 * loss_tf(clean_spec, est_spec, weights.alpha)
    if weights.gamma2:
        sdr = si_sdr(clean_wav, est_wav, weights.si_sdr_cap_db).mean()
        loss = loss + weights.gamma2 * (100.0 - sdr)
    if penalty is not None and weights.synops_weight:
        loss = loss + weights.synops_weight * penalty
    return loss
