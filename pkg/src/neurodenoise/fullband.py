"""Full-band model: stacked spiking layers mapping |X| (T x F) to an embedding E (T x F)."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .neurons import LayerRun, LeakyReadout, SpikingLayer


class FullBandNet(nn.Module):
    def __init__(self, F: int, widths: Sequence[int] = (384, 384), kind: str = "gsn",
                 readout_decay: float = 0.2, **neuron_kw):
        super().__init__()
        if not widths:
            raise ValueError("full-band model needs at least one spiking layer")
        self.F = F
        sizes = [F, *widths]
        self.layers = nn.ModuleList(
            SpikingLayer(a, b, kind, **neuron_kw) for a, b in zip(sizes, sizes[1:])
        )
        self.readout = LeakyReadout(sizes[-1], F, readout_decay)

    def forward(self, x_seq: torch.Tensor) -> tuple[torch.Tensor, list[LayerRun]]:
        """(T, ..., F) -> E of the same shape, plus per-layer runs."""
        if x_seq.shape[-1] != self.F:
            raise ValueError(f"expected {self.F} bins, got {x_seq.shape[-1]}")
        runs, h = [], x_seq
        for layer in self.layers:
            run = layer(h)
            runs.append(run)
            h = run.spikes
        E, _ = self.readout(h)
        return E, runs

    def init_state(self, batch_shape, dtype=None):
        return ([layer.init_state(batch_shape, dtype) for layer in self.layers],
                self.readout.init_state(batch_shape, dtype))

    def step(self, x, state):
        layer_states, ro = state
        new_states, frame, h = [], [], x
        for layer, st in zip(self.layers, layer_states):
            st, h, lam = layer.step(h, st)
            new_states.append(st)
            frame.append((h, lam))
        ro = self.readout.step(h, ro)
        return ro, (new_states, ro), frame


def full_band_forward(mag, net: FullBandNet):
    """Embedding of a (T, F) magnitude grid; returns (E as ndarray, layer runs)."""
    x = torch.as_tensor(np.asarray(mag), dtype=net.readout.w.dtype)
    if x.ndim != 2 or x.shape[1] != net.F:
        raise ValueError(f"expected a T x {net.F} magnitude grid, got {tuple(x.shape)}")
    with torch.no_grad():
        E, runs = net(x)
    return E.numpy(), runs
