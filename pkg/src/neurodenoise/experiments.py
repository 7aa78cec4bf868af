"""Desk-scale training runs shared by the acceptance suite and scripts/."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import torch

from .config import ModelConfig, TrainingConfig
from .datasynth import toy_task
from .model import SpikingFullSubNet
from .profiler import DecayStats, decay_stats
from .spectral import AudioBuffer
from .streaming import enhance
from .trainer import EpochLog, Trainer


@dataclass
class DeskRun:
    neuron_kind: str
    model: SpikingFullSubNet
    history: list
    init_decay: Optional[DecayStats]

    @property
    def final(self) -> EpochLog:
        return self.history[-1]

    @property
    def steps(self) -> int:
        return sum(h.steps for h in self.history)


def decay_on(model: SpikingFullSubNet, clips) -> DecayStats:
    runs = []
    with torch.no_grad():
        for noisy in clips:
            runs += [r.decay for r in enhance(model, AudioBuffer(noisy)).runs.values()]
    return decay_stats(runs)


def desk_run(neuron_kind: str = "gsn", seed: int = 0, training: Optional[TrainingConfig] = None,
             on_epoch: Optional[Callable[[EpochLog], None]] = None, data_seed: int = 0,
             **model_kw) -> DeskRun:
    """Train the desk preset on the toy task; the same seed gives every neuron kind the same data."""
    train, held = toy_task(seed=data_seed)
    torch.manual_seed(seed)
    model = SpikingFullSubNet(ModelConfig.desk(neuron_kind=neuron_kind, **model_kw))
    init = decay_on(model, [p[0] for p in held[:3]]) if neuron_kind == "gsn" else None
    cfg = replace(training or TrainingConfig.desk(), seed=seed)
    history = Trainer(model, cfg).fit(train, held, on_epoch=on_epoch)
    return DeskRun(neuron_kind, model, history, init)


def zero_gsn_model(cfg: ModelConfig) -> SpikingFullSubNet:
    """GSN model with every spiking-layer weight and bias at zero, so every gate reads sigmoid(0)."""
    model = SpikingFullSubNet(cfg)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if ".layers." in name:
                p.zero_()
    return model


def held_out_clips(n: int = 3, data_seed: int = 0) -> list[np.ndarray]:
    return [p[0] for p in toy_task(seed=data_seed)[1][:n]]
