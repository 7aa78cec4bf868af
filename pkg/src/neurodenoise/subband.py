"""Frequency partitioning, grouped sub-band features and per-partition GSN nets.

Bins are 1-based (``1..F``) in the partition bookkeeping, matching the
one-sided spectrum with the DC bin removed. Tensors index them 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn as nn

from .neurons import LayerRun, LeakyReadout, SpikingLayer


class PartitionError(ValueError):
    pass


class SubbandGroup(NamedTuple):
    k: int       # partition index, 0-based
    index: int   # group index within the partition
    start: int   # first bin, 1-based
    width: int   # g_k

    @property
    def bins(self) -> range:
        return range(self.start, self.start + self.width)


@dataclass(frozen=True)
class PartitionScheme:
    cutoffs: tuple
    groupings: tuple
    filter_orders: tuple
    context: int
    F: int

    def __post_init__(self):
        cut, g, d = self.cutoffs, self.groupings, self.filter_orders
        if len(g) != len(cut) + 1 or len(d) != len(g):
            raise PartitionError("need one grouping and one filter order per partition")
        if any(b <= a for a, b in zip(cut, cut[1:])):
            raise PartitionError("cutoffs must be strictly ascending")
        if cut and (cut[0] < 1 or cut[-1] >= self.F):
            raise PartitionError("cutoffs must lie in [1, F)")
        if self.context < 0 or any(x < 1 for x in g) or any(x < 0 for x in d):
            raise PartitionError("need context >= 0, groupings >= 1, orders >= 0")
        for (lo, hi), gk in zip(self.bounds, g):
            if (hi - lo + 1) % gk:
                raise PartitionError(f"partition [{lo}, {hi}] not divisible by grouping {gk}")

    @property
    def K(self) -> int:
        return len(self.groupings)

    @property
    def bounds(self) -> list[tuple[int, int]]:
        """Inclusive 1-based (first, last) bin of each partition."""
        edges = [0, *self.cutoffs, self.F]
        return [(edges[k] + 1, edges[k + 1]) for k in range(len(edges) - 1)]

    def size(self, k: int) -> int:
        lo, hi = self.bounds[k]
        return hi - lo + 1

    def n_groups(self, k: int) -> int:
        return self.size(k) // self.groupings[k]

    def feature_len(self, k: int) -> int:
        return 2 * self.context + 2 * self.groupings[k]

    def logit_len(self, k: int) -> int:
        return 2 * self.groupings[k] * (self.filter_orders[k] + 1)

    @property
    def groups(self) -> list[SubbandGroup]:
        out = []
        for k, ((lo, _), gk) in enumerate(zip(self.bounds, self.groupings)):
            out.extend(SubbandGroup(k, j, lo + j * gk, gk) for j in range(self.n_groups(k)))
        return out


def make_partition(cutoffs: Sequence[int], groupings: Sequence[int], orders: Sequence[int],
                   N: int, F: int) -> PartitionScheme:
    return PartitionScheme(tuple(int(c) for c in cutoffs), tuple(int(g) for g in groupings),
                           tuple(int(d) for d in orders), int(N), int(F))


def build_subband_input(mag: np.ndarray, E: np.ndarray, scheme: PartitionScheme,
                        group: SubbandGroup, n: int) -> np.ndarray:
    """Feature vector of one group at 1-based frame ``n``.

    Layout: [N lower context mags, g in-group mags, g embedding values,
    N upper context mags]; bins outside 1..F read as zero.
    """
    F, N = scheme.F, scheme.context
    row, erow = np.asarray(mag)[n - 1], np.asarray(E)[n - 1]

    def at(b):
        return row[b - 1] if 1 <= b <= F else 0.0

    f, g = group.start, group.width
    lower = [at(b) for b in range(f - N, f)]
    upper = [at(b) for b in range(f + g, f + g + N)]
    inner = [row[b - 1] for b in group.bins]
    emb = [erow[b - 1] for b in group.bins]
    return np.array(lower + inner + emb + upper, dtype=np.float64)


def partition_index(scheme: PartitionScheme, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Gather indices for partition ``k``.

    Returns (ctx_idx, grp_idx): ``ctx_idx`` (G, 2N+g) indexes a magnitude row
    zero-padded by N on each side, laid out [lower, group, upper];
    ``grp_idx`` (G, g) indexes the unpadded embedding row.
    """
    N, gk = scheme.context, scheme.groupings[k]
    starts = [grp.start for grp in scheme.groups if grp.k == k]
    # padded position of 1-based bin b is b - 1 + N
    ctx = [[s - 1 + off for off in range(2 * N + gk)] for s in starts]
    grp = [[s - 1 + m for m in range(gk)] for s in starts]
    return torch.tensor(ctx, dtype=torch.long), torch.tensor(grp, dtype=torch.long)


def partition_features(mag: torch.Tensor, E: torch.Tensor, scheme: PartitionScheme, k: int,
                       index=None) -> torch.Tensor:
    """(..., F) magnitudes and embedding -> (..., G_k, 2N + 2 g_k) features."""
    N, gk = scheme.context, scheme.groupings[k]
    ctx_idx, grp_idx = index if index is not None else partition_index(scheme, k)
    padded = torch.nn.functional.pad(mag, (N, N))
    ctx = padded[..., ctx_idx]          # (..., G, 2N+g)
    emb = E[..., grp_idx]               # (..., G, g)
    return torch.cat([ctx[..., :N + gk], emb, ctx[..., N + gk:]], dim=-1)


class PartitionNet(nn.Module):
    """Spiking stack shared by every group of one partition, plus a logit readout."""

    def __init__(self, n_in: int, widths: Sequence[int], n_out: int, kind: str = "gsn",
                 readout_decay: float = 0.2, **neuron_kw):
        super().__init__()
        sizes = [n_in, *widths]
        self.layers = nn.ModuleList(
            SpikingLayer(a, b, kind, **neuron_kw) for a, b in zip(sizes, sizes[1:])
        )
        self.readout = LeakyReadout(sizes[-1], n_out, readout_decay)

    def forward(self, x_seq: torch.Tensor) -> tuple[torch.Tensor, list[LayerRun]]:
        runs = []
        h = x_seq
        for layer in self.layers:
            run = layer(h)
            runs.append(run)
            h = run.spikes
        logits, _ = self.readout(h)
        return logits, runs

    def init_state(self, batch_shape, dtype=None):
        return ([layer.init_state(batch_shape, dtype) for layer in self.layers],
                self.readout.init_state(batch_shape, dtype))

    def step(self, x, state):
        layer_states, ro = state
        new_states, frame = [], []
        h = x
        for layer, st in zip(self.layers, layer_states):
            st, h, lam = layer.step(h, st)
            new_states.append(st)
            frame.append((h, lam))
        ro = self.readout.step(h, ro)
        return ro, (new_states, ro), frame


def subband_macs_per_frame(scheme: PartitionScheme, widths: Sequence[Sequence[int]]) -> int:
    """Dense-equivalent multiply-accumulates of the sub-band stage for one frame."""
    total = 0
    for k in range(scheme.K):
        sizes = [scheme.feature_len(k), *widths[k]]
        per_group = sum(a * b + b * b for a, b in zip(sizes, sizes[1:]))
        per_group += sizes[-1] * scheme.logit_len(k)
        total += scheme.n_groups(k) * per_group
    return total
