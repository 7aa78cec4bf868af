"""The assembled full-band + partitioned sub-band spiking enhancer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .config import ModelConfig
from .deepfilter import deep_filter, deep_filter_frame, logits_to_taps
from .fullband import FullBandNet
from .neurons import LayerRun
from .subband import PartitionNet, partition_features, partition_index

_EPS = 1e-8


class TopologyLayer(NamedTuple):
    name: str
    n_neurons: int         # N^l per instance
    ff_fanout: int         # N^{l+1}
    has_recurrence: bool
    instances: int = 1     # sub-band groups sharing the layer
    spiking: bool = True
    fan_in: int = 0        # dense inputs, readouts only


class ModelOutput(NamedTuple):
    est: torch.Tensor                # (B, T, F+1) complex
    embedding: torch.Tensor          # (T, B, F)
    runs: dict                       # layer name -> LayerRun
    logits: list                     # per partition (T, B, G, 2g(d+1))


@dataclass
class StreamState:
    mu: Optional[torch.Tensor]
    fullband: tuple
    subband: list
    history: torch.Tensor   # (D, B, F) complex, history[j] = x(n - j)


class SpikingFullSubNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.scheme = cfg.scheme
        kw = cfg.neuron_kwargs()
        self.fullband = FullBandNet(cfg.F, cfg.fullband_layers, cfg.neuron_kind,
                                    cfg.readout_decay, **kw)
        self.subband = nn.ModuleList(
            PartitionNet(self.scheme.feature_len(k), cfg.subband_layers[k],
                         self.scheme.logit_len(k), cfg.neuron_kind, cfg.readout_decay, **kw)
            for k in range(self.scheme.K)
        )
        self._index = [partition_index(self.scheme, k) for k in range(self.scheme.K)]
        # fixed gain on the unmodelled DC bin; only debug constructions change it
        self.register_buffer("dc_tap", torch.ones(()), persistent=False)
        self.init_passthrough(cfg.readout_weight_scale)

    def init_passthrough(self, weight_scale: float = 0.0, decay: Optional[float] = None) -> None:
        """Bias every sub-band readout to the tap 1+0j on the current frame and 0 elsewhere."""
        with torch.no_grad():
            for k, net in enumerate(self.subband):
                g, d = self.scheme.groupings[k], self.scheme.filter_orders[k]
                bias = torch.zeros(g, d + 1, 2)
                bias[:, 0, 0] = 1.0
                net.readout.b.copy_(bias.reshape(-1))
                net.readout.w.mul_(weight_scale)
                if decay is not None:
                    net.readout.decay.fill_(decay)

    # -- bookkeeping -----------------------------------------------------------

    def set_spike_mode(self, mode: str) -> None:
        for m in self.modules():
            if hasattr(m, "spike_mode"):
                m.spike_mode = mode

    def spiking_layer_names(self) -> list[str]:
        names = [f"fullband.{i}" for i in range(len(self.fullband.layers))]
        for k, net in enumerate(self.subband):
            names += [f"subband.{k}.{i}" for i in range(len(net.layers))]
        return names

    def topology(self) -> list[TopologyLayer]:
        """Spiking layers first (in spiking_layer_names order), then readouts."""
        out = []
        fb = self.fullband
        sizes = [layer.n_out for layer in fb.layers] + [fb.readout.n_out]
        for i in range(len(fb.layers)):
            out.append(TopologyLayer(f"fullband.{i}", sizes[i], sizes[i + 1], True))
        for k, net in enumerate(self.subband):
            G = self.scheme.n_groups(k)
            sizes = [layer.n_out for layer in net.layers] + [net.readout.n_out]
            for i in range(len(net.layers)):
                out.append(TopologyLayer(f"subband.{k}.{i}", sizes[i], sizes[i + 1], True, G))
        out.append(TopologyLayer("fullband.readout", fb.readout.n_out, 0, False, 1, False,
                                 fb.readout.n_in))
        for k, net in enumerate(self.subband):
            out.append(TopologyLayer(f"subband.{k}.readout", net.readout.n_out, 0, False,
                                     self.scheme.n_groups(k), False, net.readout.n_in))
        return out

    def param_counts(self) -> dict[str, int]:
        counts = {"fullband": sum(p.numel() for p in self.fullband.parameters())}
        for k, net in enumerate(self.subband):
            counts[f"subband.{k}"] = sum(p.numel() for p in net.parameters())
        counts["total"] = sum(counts.values())
        return counts

    # -- normalization ---------------------------------------------------------

    def _compress(self, x: torch.Tensor) -> torch.Tensor:
        return torch.log1p(x) if self.cfg.input_transform == "log1p" else x

    def normalize(self, mag: torch.Tensor) -> torch.Tensor:
        """(B, T, F) magnitudes scaled by a causal running mean (or utterance mean)."""
        with torch.no_grad():
            if self.cfg.normalization == "utterance":
                mu = mag.mean(dim=(-2, -1), keepdim=True)
                return self._compress(mag / (mu + _EPS))
            a = self.cfg.norm_ema
            frame_mean = mag.mean(-1)
            mus, mu = [], frame_mean[..., 0]
            for t in range(mag.shape[-2]):
                mu = a * mu + (1.0 - a) * frame_mean[..., t] if t else frame_mean[..., 0]
                mus.append(mu)
            mu = torch.stack(mus, -1).unsqueeze(-1)
        return self._compress(mag / (mu + _EPS))

    # -- sequence path (training) ---------------------------------------------

    def forward(self, noisy: torch.Tensor) -> ModelOutput:
        """(B, T, F+1) noisy complex spectrum -> enhanced spectrum and traces."""
        bins = noisy[..., 1:]
        x = self.normalize(bins.abs()).transpose(0, 1)          # (T, B, F)
        E, fb_runs = self.fullband(x)
        runs = {f"fullband.{i}": r for i, r in enumerate(fb_runs)}
        taps, logits_all = [], []
        for k, net in enumerate(self.subband):
            feats = partition_features(x, E, self.scheme, k, self._index[k])
            logits, sb_runs = net(feats)
            runs.update({f"subband.{k}.{i}": r for i, r in enumerate(sb_runs)})
            logits_all.append(logits)
            g, d = self.scheme.groupings[k], self.scheme.filter_orders[k]
            taps.append(logits_to_taps(logits, g, d).transpose(0, 1))
        est_bins = deep_filter(bins, taps, self.scheme)
        est = torch.cat([noisy[..., :1] * self.dc_tap, est_bins], dim=-1)
        return ModelOutput(est, E, runs, logits_all)

    # -- frame path (streaming / offline enhancement) --------------------------

    def init_stream(self, batch: int = 1) -> StreamState:
        dtype = self.fullband.readout.w.dtype
        cdtype = torch.complex128 if dtype == torch.float64 else torch.complex64
        D = max(self.scheme.filter_orders) + 1
        sub = [net.init_state((batch, self.scheme.n_groups(k)), dtype)
               for k, net in enumerate(self.subband)]
        return StreamState(
            mu=None,
            fullband=self.fullband.init_state((batch,), dtype),
            subband=sub,
            history=torch.zeros(D, batch, self.cfg.F, dtype=cdtype),
        )

    def step(self, frame: torch.Tensor, state: StreamState):
        """(B, F+1) complex frame -> (enhanced frame, new state, per-layer (spikes, decay))."""
        if self.cfg.normalization != "ema":
            raise ValueError("frame-by-frame processing needs causal 'ema' normalization")
        bins = frame[..., 1:]
        with torch.no_grad():
            mag = bins.abs()
            m = mag.mean(-1)
            a = self.cfg.norm_ema
            mu = m if state.mu is None else a * state.mu + (1.0 - a) * m
            x = self._compress(mag / (mu.unsqueeze(-1) + _EPS))
            E, fb_state, records = self.fullband.step(x, state.fullband)
            history = torch.cat([bins.unsqueeze(0), state.history[:-1]], dim=0)
            taps, sub_states = [], []
            for k, net in enumerate(self.subband):
                feats = partition_features(x, E, self.scheme, k, self._index[k])
                logits, st, rec = net.step(feats, state.subband[k])
                sub_states.append(st)
                records += rec
                g, d = self.scheme.groupings[k], self.scheme.filter_orders[k]
                taps.append(logits_to_taps(logits, g, d))
            est_bins = deep_filter_frame(history, taps, self.scheme)
        est = torch.cat([frame[..., :1] * self.dc_tap, est_bins], dim=-1)
        return est, StreamState(mu, fb_state, sub_states, history), records


def stack_records(records: list[list[tuple]], names: list[str]) -> dict[str, LayerRun]:
    """Turn per-frame (spikes, decay) records into LayerRun-like traces."""
    out = {}
    for i, name in enumerate(names):
        spikes = torch.stack([r[i][0] for r in records])
        decays = [r[i][1] for r in records]
        decay = torch.stack(decays) if decays[0] is not None else None
        out[name] = LayerRun(spikes, decay, None, None)
    return out
