"""16-bit mono 16 kHz PCM WAV reading and writing."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .spectral import SAMPLE_RATE, AudioBuffer


class WavFormatError(ValueError):
    pass


def read_wav(path: str | Path) -> AudioBuffer:
    try:
        wf = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    with wf:
        if wf.getnchannels() != 1:
            raise WavFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise WavFormatError(f"{path}: expected 16-bit PCM")
        if wf.getframerate() != SAMPLE_RATE:
            raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {wf.getframerate()}")
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / 32768.0)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(path: str | Path, audio: AudioBuffer | np.ndarray) -> None:
    samples = audio.samples if isinstance(audio, AudioBuffer) else audio
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(to_pcm16(samples).tobytes())
