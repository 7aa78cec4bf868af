"""Offline and hop-by-hop streaming enhancement sharing one frame-level code path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .model import SpikingFullSubNet, stack_records
from .profiler import ENC_DEC_LATENCY_S
from .spectral import (AudioBuffer, ComplexSpectrogram, StftConfig, hann, istft, ola_normalize,
                       stft)


@dataclass
class Enhanced:
    audio: AudioBuffer
    noisy_spec: ComplexSpectrogram
    spec: ComplexSpectrogram
    runs: dict


def algorithmic_latency_s(cfg: StftConfig, enc_dec_s: float = ENC_DEC_LATENCY_S) -> float:
    """Window buffering plus encode/decode time; 32.02 ms for the 512-sample window."""
    return cfg.algorithmic_latency_s + enc_dec_s


def _complex_dtype(model: SpikingFullSubNet):
    return torch.complex128 if model.fullband.readout.w.dtype == torch.float64 else torch.complex64


def enhance_spectrogram(model: SpikingFullSubNet, noisy: ComplexSpectrogram):
    """Frame-by-frame enhancement of a whole spectrogram; returns (spec, runs)."""
    full = torch.as_tensor(noisy.full(), dtype=_complex_dtype(model))
    state = model.init_stream(1)
    out, records = [], []
    for n in range(full.shape[0]):
        est, state, rec = model.step(full[n:n + 1], state)
        out.append(est[0])
        records.append(rec)
    est = torch.stack(out).numpy().astype(np.complex128)
    return ComplexSpectrogram.from_full(est), stack_records(records, model.spiking_layer_names())


def enhance(model: SpikingFullSubNet, audio: AudioBuffer) -> Enhanced:
    cfg = model.cfg.stft
    noisy = stft(audio, cfg)
    spec, runs = enhance_spectrogram(model, noisy)
    return Enhanced(istft(spec, cfg), noisy, spec, runs)


class StreamingEnhancer:
    """Consumes ``hop_len``-sample chunks and emits ``hop_len`` finished samples per frame.

    A ring of one window feeds the analysis; synthesis overlap-adds into a
    window-long accumulator and normalizes by the same floored squared-window
    sum as the offline inverse transform. ``flush`` releases the last partial window.
    """

    def __init__(self, model: SpikingFullSubNet):
        self.model = model
        self.cfg = model.cfg.stft
        self.win = hann(self.cfg.window_len)
        self.w2 = self.win ** 2
        self.ring = np.zeros(self.cfg.window_len)
        self.filled = 0
        self.acc = np.zeros(self.cfg.window_len)
        self.env = np.zeros(self.cfg.window_len)
        self.state = model.init_stream(1)
        self.frames: list[np.ndarray] = []
        self.noisy_frames: list[np.ndarray] = []
        self.records: list = []
        self._cdtype = _complex_dtype(model)

    def _analyze(self) -> np.ndarray:
        return stft(AudioBuffer(self.ring), self.cfg).full()[0]

    def process(self, chunk: np.ndarray) -> np.ndarray:
        hop, W = self.cfg.hop_len, self.cfg.window_len
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.shape != (hop,):
            raise ValueError(f"chunks must hold exactly {hop} samples")
        self.ring = np.concatenate([self.ring[hop:], chunk])
        self.filled += hop
        if self.filled < W:
            return np.zeros(0)
        noisy = self._analyze()
        self.noisy_frames.append(noisy)
        est, self.state, rec = self.model.step(
            torch.as_tensor(noisy[None], dtype=self._cdtype), self.state)
        self.records.append(rec)
        est = est[0].numpy().astype(np.complex128)
        self.frames.append(est)
        frame = np.fft.irfft(est[None], n=self.cfg.fft_size, axis=-1)[0, :W] * self.win
        self.acc += frame
        self.env += self.w2
        done = ola_normalize(self.acc[:hop], self.env[:hop], self.cfg)
        self.acc = np.concatenate([self.acc[hop:], np.zeros(hop)])
        self.env = np.concatenate([self.env[hop:], np.zeros(hop)])
        return done

    def flush(self) -> np.ndarray:
        if not self.frames:
            return np.zeros(0)
        tail = self.cfg.window_len - self.cfg.hop_len
        return ola_normalize(self.acc[:tail], self.env[:tail], self.cfg)

    def spectrogram(self) -> ComplexSpectrogram:
        return ComplexSpectrogram.from_full(np.stack(self.frames))

    def runs(self) -> dict:
        return stack_records(self.records, self.model.spiking_layer_names())


def enhance_streaming(model: SpikingFullSubNet, audio: AudioBuffer) -> Enhanced:
    """Feed ``audio`` hop by hop; trailing samples short of a hop are dropped like offline framing."""
    hop = model.cfg.stft.hop_len
    x = audio.samples
    eng = StreamingEnhancer(model)
    out = [eng.process(x[i:i + hop]) for i in range(0, len(x) - hop + 1, hop)]
    out.append(eng.flush())
    noisy = ComplexSpectrogram.from_full(np.stack(eng.noisy_frames))
    return Enhanced(AudioBuffer(np.concatenate(out)), noisy, eng.spectrogram(), eng.runs())
