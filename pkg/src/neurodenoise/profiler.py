"""Neuromorphic cost accounting: SynOPs, NeuronOPs, power/PDP proxies, energy, activity stats."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import torch

ENC_DEC_LATENCY_S = 0.02e-3
DEFAULT_LATENCY_S = 0.032 + ENC_DEC_LATENCY_S
RATE_BUCKET = 0.05
DECAY_BINS = 50


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    cost_syn_pj: float = 0.9
    cost_neuron_equiv: float = 10.0   # one NeuronOP ~ this many SynOPs
    cost_mac_pj: float = 4.6
    cost_ac_pj: float = 0.9

    def per_op_joules(self, op_class: str) -> float:
        if op_class == "AC":
            return self.cost_ac_pj * 1e-12
        if op_class == "MAC":
            return self.cost_mac_pj * 1e-12
        raise ProfileError(f"unknown op class {op_class!r}")


def _np(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    return np.asarray(x)


def _fanout(layer) -> int:
    return layer.ff_fanout + (layer.n_neurons if layer.has_recurrence else 0)


def count_synops(traces: Sequence, topology: Sequence) -> float:
    """Total spikes of each neuron times its fan-out (feed-forward + recurrent).

    ``traces[l]`` holds the binary spikes of spiking layer ``l`` with the
    neuron axis last; all leading axes (time, batch, group) are summed.
    """
    if len(traces) != len(topology):
        raise ProfileError(f"{len(traces)} traces for {len(topology)} layers")
    total = 0.0
    for spikes, layer in zip(traces, topology):
        s = _np(spikes)
        if s.shape[-1] != layer.n_neurons:
            raise ProfileError(f"{layer.name}: trace has {s.shape[-1]} neurons, "
                               f"topology says {layer.n_neurons}")
        total += float(s.sum()) * _fanout(layer)
    return total


def count_neuronops(topology: Sequence, steps: int) -> float:
    """Every neuron instance of every layer updates once per step."""
    return float(sum(layer.n_neurons * layer.instances for layer in topology) * steps)


def power_proxy(synops: float, neuronops: float, audio_seconds: float,
                neuron_equiv: float = 10.0) -> float:
    if audio_seconds <= 0:
        raise ProfileError("audio duration must be positive")
    return (synops + neuron_equiv * neuronops) / audio_seconds


def pdp_proxy(power: float, latency_s: float = DEFAULT_LATENCY_S) -> float:
    if latency_s < 0:
        raise ProfileError("latency must be non-negative")
    return power * latency_s


def energy_cost(pdp_ops: float, op_class: str = "AC", model: CostModel = CostModel()) -> float:
    return pdp_ops * model.per_op_joules(op_class)


def rate_histogram(rates: np.ndarray) -> dict[float, float]:
    """Mass at bucket centres 0, 0.05, ..., 1 (nearest-centre assignment)."""
    n_buckets = int(round(1 / RATE_BUCKET)) + 1
    rates = np.clip(np.asarray(rates, dtype=np.float64).ravel(), 0.0, 1.0)
    idx = np.rint(rates / RATE_BUCKET).astype(int)
    counts = np.bincount(idx, minlength=n_buckets)
    mass = counts / max(1, rates.size)
    return {round(i * RATE_BUCKET, 10): float(m) for i, m in enumerate(mass)}


@dataclass
class FiringStats:
    per_neuron: dict
    per_sample: dict
    fraction_silent: float
    fraction_below_0_2: float
    n_neurons: int
    n_samples: int
    mean_rate: float


def firing_stats(traces: Sequence, batch_axis: int | None = 1) -> FiringStats:
    """Rate statistics; axis 0 is time, ``batch_axis`` indexes samples (None = one sample)."""
    neuron_rates, sample_rates, spikes_total, slots = [], [], 0.0, 0
    per_sample_spikes, per_sample_slots = None, 0
    for spikes in traces:
        s = _np(spikes).astype(np.float64)
        if batch_axis is None:
            s = s[:, None]
        else:
            s = np.moveaxis(s, batch_axis, 1)
        T, B = s.shape[:2]
        s = s.reshape(T, B, -1)
        neuron_rates.append(s.mean(axis=(0, 1)))
        ps = s.sum(axis=(0, 2))
        per_sample_spikes = ps if per_sample_spikes is None else per_sample_spikes + ps
        per_sample_slots += T * s.shape[2]
        spikes_total += s.sum()
        slots += s.size
    rates = np.concatenate(neuron_rates)
    sample_rates = per_sample_spikes / per_sample_slots
    return FiringStats(
        per_neuron=rate_histogram(rates),
        per_sample=rate_histogram(sample_rates),
        fraction_silent=float(np.mean(rates == 0)),
        fraction_below_0_2=float(np.mean(rates < 0.2)),
        n_neurons=int(rates.size),
        n_samples=int(sample_rates.size),
        mean_rate=float(spikes_total / max(1, slots)),
    )


@dataclass
class DecayStats:
    edges: list
    mass: list
    mean: float
    variance: float
    fraction_near_half: float   # mass in [0.45, 0.55]
    count: int


def decay_stats(decays: Sequence) -> DecayStats:
    """Normalized histogram of recorded GSN decay values over neurons x time."""
    vals = [_np(d).ravel() for d in decays if d is not None]
    if not vals:
        raise ProfileError("no GSN decay traces to summarize")
    v = np.concatenate(vals).astype(np.float64)
    counts, edges = np.histogram(v, bins=DECAY_BINS, range=(0.0, 1.0))
    return DecayStats(
        edges=edges.tolist(),
        mass=(counts / v.size).tolist(),
        mean=float(v.mean()),
        variance=float(v.var()),
        fraction_near_half=float(np.mean((v >= 0.45) & (v <= 0.55))),
        count=int(v.size),
    )


@dataclass
class PowerReport:
    synops: float = 0.0
    neuronops: float = 0.0
    dense_ops: float = 0.0        # non-spike-driven MACs at full activity, reported apart
    audio_seconds: float = 0.0
    steps: int = 0
    power_proxy: float = 0.0
    pdp_proxy: float = 0.0
    energy_j: float = 0.0
    latency_s: float = DEFAULT_LATENCY_S
    op_class: str = "AC"
    firing_histogram: dict = field(default_factory=dict)
    sample_rate_hist: dict = field(default_factory=dict)
    decay_histogram: dict = field(default_factory=dict)
    fraction_silent: float = 0.0
    fraction_below_0_2: float = 0.0
    n_neurons: int = 0
    n_samples: int = 0
    n_decay: int = 0

    def finalize(self, cost: CostModel = CostModel()) -> "PowerReport":
        if self.audio_seconds > 0:
            self.power_proxy = power_proxy(self.synops, self.neuronops, self.audio_seconds,
                                           cost.cost_neuron_equiv)
        self.pdp_proxy = pdp_proxy(self.power_proxy, self.latency_s)
        self.energy_j = energy_cost(self.pdp_proxy, self.op_class, cost)
        return self

    def merge(self, other: "PowerReport") -> "PowerReport":
        """Combine reports of independent streams (associative and commutative)."""
        if self.latency_s != other.latency_s or self.op_class != other.op_class:
            raise ProfileError("cannot merge reports with different latency or cost class")

        def mix(a: dict, wa: int, b: dict, wb: int) -> dict:
            keys = sorted(set(a) | set(b), key=float)
            tot = wa + wb
            return {k: (a.get(k, 0.0) * wa + b.get(k, 0.0) * wb) / tot if tot else 0.0
                    for k in keys}

        wn = self.n_neurons + other.n_neurons
        out = PowerReport(
            synops=self.synops + other.synops,
            neuronops=self.neuronops + other.neuronops,
            dense_ops=self.dense_ops + other.dense_ops,
            audio_seconds=self.audio_seconds + other.audio_seconds,
            steps=self.steps + other.steps,
            latency_s=self.latency_s,
            op_class=self.op_class,
            firing_histogram=mix(self.firing_histogram, self.n_neurons,
                                 other.firing_histogram, other.n_neurons),
            sample_rate_hist=mix(self.sample_rate_hist, self.n_samples,
                                 other.sample_rate_hist, other.n_samples),
            decay_histogram=mix(self.decay_histogram, self.n_decay,
                                other.decay_histogram, other.n_decay),
            fraction_silent=((self.fraction_silent * self.n_neurons
                              + other.fraction_silent * other.n_neurons) / wn) if wn else 0.0,
            fraction_below_0_2=((self.fraction_below_0_2 * self.n_neurons
                                 + other.fraction_below_0_2 * other.n_neurons) / wn) if wn else 0.0,
            n_neurons=wn,
            n_samples=self.n_samples + other.n_samples,
            n_decay=self.n_decay + other.n_decay,
        )
        return out.finalize()

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("firing_histogram", "sample_rate_hist", "decay_histogram"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return json.dumps(d, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("audio (s)", f"{self.audio_seconds:.3f}"),
            ("steps", f"{self.steps}"),
            ("SynOPs", f"{self.synops:.4g}"),
            ("NeuronOPs", f"{self.neuronops:.4g}"),
            ("power proxy (Ops/s)", f"{self.power_proxy / 1e6:.2f} M"),
            ("latency (ms)", f"{self.latency_s * 1e3:.2f}"),
            ("PDP proxy (Ops)", f"{self.pdp_proxy / 1e6:.3f} M"),
            (f"energy ({self.op_class}, J)", f"{self.energy_j:.3e}"),
            ("dense MACs (separate)", f"{self.dense_ops:.4g}"),
            ("silent neurons", f"{self.fraction_silent:.1%}"),
            ("neurons with rate < 0.2", f"{self.fraction_below_0_2:.1%}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def dense_ops_per_step(model) -> int:
    """MACs driven by real-valued signals: inputs into first layers, taps into the filter."""
    scheme = model.scheme
    total = model.fullband.layers[0].n_in * model.fullband.layers[0].n_out
    for k, net in enumerate(model.subband):
        G = scheme.n_groups(k)
        total += G * net.layers[0].n_in * net.layers[0].n_out
        total += G * scheme.logit_len(k) // 2
    return total


def profile_traces(model, runs: Mapping, audio_seconds: float, steps: int,
                   latency_s: float = DEFAULT_LATENCY_S, op_class: str = "AC",
                   cost: CostModel = CostModel(), batch_axis: int | None = 1) -> PowerReport:
    """Build a PowerReport from a forward pass's per-layer traces.

    ``audio_seconds`` and ``steps`` cover the whole batch.
    """
    topo = model.topology()
    spiking = [t for t in topo if t.spiking]
    spikes = [runs[t.name].spikes for t in spiking]
    synops = count_synops(spikes, spiking)
    n_streams = 1 if batch_axis is None else int(_np(spikes[0]).shape[batch_axis])
    neuronops = count_neuronops(topo, steps)
    fs = firing_stats(spikes, batch_axis)
    decays = [runs[t.name].decay for t in spiking if runs[t.name].decay is not None]
    if decays:
        ds = decay_stats(decays)
        centres = [(a + b) / 2 for a, b in zip(ds.edges, ds.edges[1:])]
        decay_hist = {round(c, 10): m for c, m in zip(centres, ds.mass)}
        n_decay = ds.count
    else:
        decay_hist, n_decay = {}, 0
    rep = PowerReport(
        synops=synops,
        neuronops=neuronops,
        dense_ops=float(dense_ops_per_step(model) * steps),
        audio_seconds=audio_seconds,
        steps=steps,
        latency_s=latency_s,
        op_class=op_class,
        firing_histogram=fs.per_neuron,
        sample_rate_hist=fs.per_sample,
        decay_histogram=decay_hist,
        fraction_silent=fs.fraction_silent,
        fraction_below_0_2=fs.fraction_below_0_2,
        n_neurons=fs.n_neurons,
        n_samples=n_streams,
        n_decay=n_decay,
    )
    return rep.finalize(cost)
