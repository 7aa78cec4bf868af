"""Causal STFT front-end.

Frames are taken strictly from the past: frame ``n`` covers samples
``[n*hop, n*hop + window_len)`` with no centre padding. The DC bin is split
off and carried alongside the ``F = fft_size // 2`` modelled bins (indices
``1..fft_size//2`` of the one-sided spectrum).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch

SAMPLE_RATE = 16000


class SpectralError(ValueError):
    pass


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate != SAMPLE_RATE:
            raise SpectralError(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise SpectralError("audio contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    hop_len: int = 128
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise SpectralError(f"unsupported window {self.window!r}")
        if self.hop_len <= 0 or self.window_len % self.hop_len:
            raise SpectralError("hop_len must divide window_len")
        if self.fft_size < self.window_len:
            raise SpectralError("fft_size must be >= window_len")
        if self.window_len // self.hop_len < 2:
            raise SpectralError("Hann COLA needs at least 50% overlap")

    @property
    def n_bins(self) -> int:
        """Modelled bins, DC excluded."""
        return self.fft_size // 2

    @property
    def algorithmic_latency_s(self) -> float:
        return self.window_len / SAMPLE_RATE

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.window_len) // self.hop_len

    def n_samples(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop_len + self.window_len

    def interior(self, n_samples: int) -> slice:
        """Samples covered by a full overlap of windows."""
        edge = self.window_len - self.hop_len
        return slice(edge, max(edge, n_samples - edge))


@dataclass
class ComplexSpectrogram:
    frames: np.ndarray  # (T, F) complex, one-sided bins 1..F
    dc: np.ndarray = field(default=None)  # (T,) complex, bypassed bin 0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        if self.frames.ndim != 2:
            raise SpectralError("frames must be a T x F grid")
        if self.dc is None:
            self.dc = np.zeros(self.frames.shape[0], dtype=np.complex128)
        self.dc = np.asarray(self.dc, dtype=np.complex128).reshape(-1)
        if self.dc.shape[0] != self.frames.shape[0]:
            raise SpectralError("dc length must equal frame count")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def F(self) -> int:
        return self.frames.shape[1]

    def full(self) -> np.ndarray:
        """(T, F+1) one-sided spectrum including the DC bin."""
        return np.concatenate([self.dc[:, None], self.frames], axis=1)

    @classmethod
    def from_full(cls, full: np.ndarray) -> "ComplexSpectrogram":
        full = np.asarray(full)
        return cls(frames=full[:, 1:], dc=full[:, 0])


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (COLA at hop n/4 and n/2)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    T = cfg.n_frames(samples.shape[-1])
    idx = np.arange(T)[:, None] * cfg.hop_len + np.arange(cfg.window_len)[None, :]
    return samples[..., idx]


def stft(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    if x.shape[-1] < cfg.window_len:
        raise SpectralError(
            f"audio has {x.shape[-1]} samples, shorter than one window ({cfg.window_len})"
        )
    frames = frame_signal(x, cfg) * hann(cfg.window_len)
    full = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return ComplexSpectrogram.from_full(full)


@lru_cache(maxsize=64)
def synthesis_envelope(n_frames: int, cfg: StftConfig) -> np.ndarray:
    w2 = hann(cfg.window_len) ** 2
    env = np.zeros(cfg.n_samples(n_frames))
    for n in range(n_frames):
        env[n * cfg.hop_len:n * cfg.hop_len + cfg.window_len] += w2
    env.flags.writeable = False
    return env


# Edge samples covered by a single window tail have a window-square sum near 0;
# dividing by it blows up any modification that is not a uniform gain.
ENVELOPE_FLOOR_REL = 0.1


def envelope_floor(cfg: StftConfig) -> float:
    """Lower bound on the divisor: a fraction of the steady-state window-square sum."""
    w2 = hann(cfg.window_len) ** 2
    return ENVELOPE_FLOOR_REL * float(w2.sum()) / cfg.hop_len


def ola_normalize(acc: np.ndarray, env: np.ndarray, cfg: StftConfig) -> np.ndarray:
    return acc / np.maximum(env, envelope_floor(cfg))


def istft(spec: ComplexSpectrogram, cfg: StftConfig = StftConfig()) -> AudioBuffer:
    """Weighted overlap-add divided by the (floored) window-square sum."""
    if spec.F != cfg.n_bins:
        raise SpectralError(f"spectrogram has F={spec.F}, config expects {cfg.n_bins}")
    frames = np.fft.irfft(spec.full(), n=cfg.fft_size, axis=-1)[:, :cfg.window_len]
    frames = frames * hann(cfg.window_len)
    out = np.zeros(cfg.n_samples(spec.T))
    for n in range(spec.T):
        out[n * cfg.hop_len:n * cfg.hop_len + cfg.window_len] += frames[n]
    return AudioBuffer(ola_normalize(out, synthesis_envelope(spec.T, cfg), cfg))


def magnitude(spec: ComplexSpectrogram) -> np.ndarray:
    return np.abs(spec.frames)


# torch mirrors of the above, used on the training path

def _torch_hann(n: int, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(hann(n), dtype=like.dtype, device=like.device)


def stft_torch(x: torch.Tensor, cfg: StftConfig = StftConfig()) -> torch.Tensor:
    """(..., L) real -> (..., T, F+1) complex, DC included."""
    frames = x.unfold(-1, cfg.window_len, cfg.hop_len) * _torch_hann(cfg.window_len, x)
    return torch.fft.rfft(frames, n=cfg.fft_size, dim=-1)


def istft_torch(spec: torch.Tensor, cfg: StftConfig = StftConfig()) -> torch.Tensor:
    """(..., T, F+1) complex -> (..., (T-1)*hop + window_len) real."""
    T = spec.shape[-2]
    frames = torch.fft.irfft(spec, n=cfg.fft_size, dim=-1)[..., :cfg.window_len]
    frames = frames * _torch_hann(cfg.window_len, frames)
    lead = frames.shape[:-2]
    # overlap-add as a transposed fold over the time axis
    folded = torch.nn.functional.fold(
        frames.reshape(-1, T, cfg.window_len).transpose(1, 2),
        output_size=(1, cfg.n_samples(T)),
        kernel_size=(1, cfg.window_len),
        stride=(1, cfg.hop_len),
    ).reshape(*lead, -1)
    env = np.maximum(synthesis_envelope(T, cfg), envelope_floor(cfg))
    return folded / torch.tensor(env, dtype=folded.dtype)
