"""Multi-frame deep filtering (MFDF) over the noisy complex spectrogram.

A partition with filter order ``d`` uses ``d + 1`` complex taps per bin,
spanning the current frame and ``d`` past frames; nothing looks ahead.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import torch

from .spectral import ComplexSpectrogram
from .subband import PartitionScheme, SubbandGroup


class FilterError(ValueError):
    pass


def build_multiframe(spec: np.ndarray, scheme: PartitionScheme, group: SubbandGroup,
                     n: int) -> np.ndarray:
    """(g, d+1) block with entry [m, j] = x(n - j, f + m); n is 1-based."""
    frames = spec.frames if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    d = scheme.filter_orders[group.k]
    block = np.zeros((group.width, d + 1), dtype=np.complex128)
    for j in range(d + 1):
        if n - j >= 1:
            block[:, j] = frames[n - j - 1, group.start - 1:group.start - 1 + group.width]
    return block


def logits_to_filter(logits, g: int, d: int) -> np.ndarray:
    """Interleaved (re, im) pairs, row-major over (bin, tap) -> (g, d+1) complex."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] != 2 * g * (d + 1):
        raise FilterError(f"expected {2 * g * (d + 1)} logits, got {logits.shape[-1]}")
    pairs = logits.reshape(*logits.shape[:-1], g, d + 1, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def filter_to_logits(taps: np.ndarray) -> np.ndarray:
    taps = np.asarray(taps)
    pairs = np.stack([taps.real, taps.imag], axis=-1)
    return pairs.reshape(*taps.shape[:-2], -1)


def apply_filter(block: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Row-wise sum of the elementwise complex product."""
    if block.shape != filt.shape:
        raise FilterError(f"block {block.shape} vs filter {filt.shape}")
    return (block * filt).sum(axis=-1)


def assemble_enhanced(spec: ComplexSpectrogram, scheme: PartitionScheme,
                      filters: Mapping[SubbandGroup, np.ndarray] | Sequence[np.ndarray]
                      ) -> ComplexSpectrogram:
    """Apply per-group (T, g, d+1) filters; the DC bin passes through unchanged."""
    groups = scheme.groups
    if not isinstance(filters, Mapping):
        filters = dict(zip(groups, filters))
    out = np.full_like(spec.frames, np.nan)
    for grp in groups:
        if grp not in filters:
            raise FilterError(f"missing filter for group {grp}")
        taps = np.asarray(filters[grp])
        for n in range(1, spec.T + 1):
            block = build_multiframe(spec, scheme, grp, n)
            out[n - 1, grp.start - 1:grp.start - 1 + grp.width] = apply_filter(block, taps[n - 1])
    return ComplexSpectrogram(frames=out, dc=spec.dc.copy())


# -- torch path ---------------------------------------------------------------

def logits_to_taps(logits: torch.Tensor, g: int, d: int) -> torch.Tensor:
    """(..., 2g(d+1)) real -> (..., g, d+1) complex."""
    pairs = logits.reshape(*logits.shape[:-1], g, d + 1, 2)
    return torch.complex(pairs[..., 0], pairs[..., 1])


def deep_filter(noisy: torch.Tensor, taps: Sequence[torch.Tensor],
                scheme: PartitionScheme) -> torch.Tensor:
    """Filter modelled bins of a (..., T, F) complex sequence.

    ``taps[k]`` is (..., T, G_k, g_k, d_k+1) complex.
    """
    T = noisy.shape[-2]
    out = []
    for k, (lo, hi) in enumerate(scheme.bounds):
        g, d = scheme.groupings[k], scheme.filter_orders[k]
        part = noisy[..., lo - 1:hi]                      # (..., T, P)
        w = taps[k].reshape(*taps[k].shape[:-3], -1, d + 1)  # (..., T, P, d+1)
        acc = w[..., 0] * part
        for j in range(1, d + 1):
            shifted = torch.nn.functional.pad(part.transpose(-1, -2), (j, 0))[..., :T]
            acc = acc + w[..., j] * shifted.transpose(-1, -2)
        out.append(acc)
    return torch.cat(out, dim=-1)


def deep_filter_frame(history: torch.Tensor, taps: Sequence[torch.Tensor],
                      scheme: PartitionScheme) -> torch.Tensor:
    """One frame of deep filtering.

    ``history`` is (D, ..., F) complex with history[j] = x(n - j) (zeros
    before the stream start); ``taps[k]`` is (..., G_k, g_k, d_k+1).
    """
    out = []
    for k, (lo, hi) in enumerate(scheme.bounds):
        d = scheme.filter_orders[k]
        w = taps[k].reshape(*taps[k].shape[:-3], -1, d + 1)
        acc = w[..., 0] * history[0][..., lo - 1:hi]
        for j in range(1, d + 1):
            acc = acc + w[..., j] * history[j][..., lo - 1:hi]
        out.append(acc)
    return torch.cat(out, dim=-1)
