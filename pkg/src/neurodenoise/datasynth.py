"""Noisy/clean pair synthesis: SNR mixing, RMS loudness normalization, toy corpora."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral import SAMPLE_RATE, AudioBuffer
from .wavio import write_wav


class SynthError(ValueError):
    pass


@dataclass
class MixSpec:
    snr_db: tuple = (-5.0, 20.0)
    loudness_dbfs: tuple = (-35.0, -15.0)
    clip_s: float = 4.0
    silence_s: float = 0.2
    n_pairs: int = 100
    seed: int = 0

    def __post_init__(self):
        self.snr_db, self.loudness_dbfs = tuple(self.snr_db), tuple(self.loudness_dbfs)
        if self.snr_db[0] > self.snr_db[1] or self.loudness_dbfs[0] > self.loudness_dbfs[1]:
            raise SynthError("ranges must be (low, high)")
        if self.clip_s <= 0 or self.silence_s < 0:
            raise SynthError("clip length must be positive")


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)


def power(x) -> float:
    s = _samples(x)
    return float(np.mean(s * s))


def rms_dbfs(x) -> float:
    return 10.0 * np.log10(power(x))


def mix_at_snr(clean, noise, snr_db: float) -> tuple[AudioBuffer, AudioBuffer]:
    """Scale ``noise`` so that 10 log10(P_clean / P_noise) == snr_db; return (noisy, noise)."""
    s, n = _samples(clean), _samples(noise)
    if s.shape != n.shape:
        raise SynthError("clean and noise must have equal length")
    ps, pn = power(s), power(n)
    if ps == 0 or pn == 0:
        raise SynthError("clean and noise must both be non-silent")
    scaled = n * np.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))
    return AudioBuffer(s + scaled), AudioBuffer(scaled)


def loudness_gain(audio, target_dbfs: float) -> float:
    p = power(audio)
    if p == 0:
        raise SynthError("cannot loudness-normalize silence")
    return float(10.0 ** (target_dbfs / 20.0) / np.sqrt(p))


def loudness_normalize(audio, target_dbfs: float) -> AudioBuffer:
    return AudioBuffer(_samples(audio) * loudness_gain(audio, target_dbfs))


# -- toy corpora ----------------------------------------------------------------

def toy_utterance(rng: np.random.Generator, duration_s: float) -> np.ndarray:
    """Band-limited sawtooth with gliding pitch, formant weighting and syllabic envelope."""
    n = int(duration_s * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(90, 260) * (1 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.3, 1.5) * t
                                                    + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    formants = rng.uniform([300, 900, 2200], [900, 2200, 3500])
    out = np.zeros(n)
    for h in range(1, int(7800 / f0.min()) + 1):
        fh = h * f0
        gain = sum(np.exp(-0.5 * ((fh - fc) / 200.0) ** 2) for fc in formants) + 0.05
        out += np.where(fh < 7800, gain / h * np.sin(h * phase), 0.0)
    syll = 0.5 * (1 - np.cos(2 * np.pi * rng.uniform(2.5, 5.0) * t))
    env = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.02)
    out *= syll * env
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12) * 0.1


def toy_noise(rng: np.random.Generator, duration_s: float) -> np.ndarray:
    """Coloured Gaussian noise with a random spectral tilt, resonance and slow AM."""
    n = int(duration_s * SAMPLE_RATE)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / SAMPLE_RATE)
    tilt = (1 + f / 1000.0) ** rng.uniform(-1.5, 0.5)
    fc, bw = rng.uniform(200, 6000), rng.uniform(100, 2000)
    shape = tilt * (1 + rng.uniform(0, 4) * np.exp(-0.5 * ((f - fc) / bw) ** 2))
    out = np.fft.irfft(spec * shape, n=n)
    t = np.arange(n) / SAMPLE_RATE
    out *= 1 + rng.uniform(0, 0.6) * np.sin(2 * np.pi * rng.uniform(0.1, 2.0) * t)
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12) * 0.1


def toy_corpora(n_sources: int = 40, n_noises: int = 20, seed: int = 1234):
    rng = np.random.default_rng(seed)
    sources = [AudioBuffer(toy_utterance(rng, rng.uniform(0.5, 1.5))) for _ in range(n_sources)]
    noises = [AudioBuffer(toy_noise(rng, rng.uniform(4.0, 8.0))) for _ in range(n_noises)]
    return sources, noises


def toy_task(n_train: int = 64, n_heldout: int = 12, seed: int = 0):
    """Training and held-out pairs drawn from disjoint toy corpora."""
    train = synth_pairset(*toy_corpora(40, 20, seed=1234 + seed), MixSpec(n_pairs=n_train, seed=1 + seed))
    held = synth_pairset(*toy_corpora(10, 6, seed=99 + seed), MixSpec(n_pairs=n_heldout, seed=2 + seed))
    return ([(p.noisy.samples, p.clean.samples) for p in train],
            [(p.noisy.samples, p.clean.samples) for p in held])


# -- pair synthesis -----------------------------------------------------------------

@dataclass
class PairRecord:
    index: int
    seed: int
    snr_db: float
    loudness_dbfs: float
    gain: float
    sources: list = field(default_factory=list)
    noise: int = 0
    noise_offset: int = 0
    noisy_path: str = ""
    clean_path: str = ""


@dataclass
class Pair:
    noisy: AudioBuffer
    clean: AudioBuffer
    noise: AudioBuffer
    record: PairRecord


def _pair_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def synth_pair(sources: Sequence[AudioBuffer], noises: Sequence[AudioBuffer], spec: MixSpec,
               index: int) -> Pair:
    rng = _pair_rng(spec.seed, index)
    n = int(round(spec.clip_s * SAMPLE_RATE))
    gap = np.zeros(int(round(spec.silence_s * SAMPLE_RATE)))
    pieces, used, total = [], [], 0
    while total < n:
        j = int(rng.integers(len(sources)))
        if pieces:
            pieces.append(gap)
            total += gap.size
        pieces.append(_samples(sources[j]))
        total += pieces[-1].size
        used.append(j)
    clean = np.concatenate(pieces)[:n]
    k = int(rng.integers(len(noises)))
    nz = _samples(noises[k])
    offset = int(rng.integers(nz.size))
    noise = np.take(nz, np.arange(offset, offset + n), mode="wrap")
    snr = float(rng.uniform(*spec.snr_db))
    level = float(rng.uniform(*spec.loudness_dbfs))
    noisy, scaled = mix_at_snr(clean, noise, snr)
    gain = loudness_gain(noisy, level)
    rec = PairRecord(index, spec.seed, snr, level, gain, used, k, offset)
    return Pair(AudioBuffer(noisy.samples * gain), AudioBuffer(clean * gain),
                AudioBuffer(scaled.samples * gain), rec)


def synth_pairset(sources: Sequence[AudioBuffer], noises: Sequence[AudioBuffer],
                  spec: MixSpec) -> list[Pair]:
    """Deterministic under ``spec.seed``; each pair draws from its own (seed, index) stream."""
    if not sources or not noises:
        raise SynthError("source and noise corpora must be non-empty")
    if all(power(s) == 0 for s in sources):
        raise SynthError("source corpus is all silence")
    if any(power(x) == 0 for x in noises):
        raise SynthError("noise corpus contains silent entries")
    return [synth_pair(sources, noises, spec, i) for i in range(spec.n_pairs)]


def write_pairset(pairs: Sequence[Pair], out_dir: str | Path) -> Path:
    """Write noisy/clean WAVs and a JSON-lines manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "noisy").mkdir(parents=True, exist_ok=True)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with manifest.open("w") as fh:
        for p in pairs:
            rec = p.record
            rec.noisy_path = f"noisy/{rec.index:05d}.wav"
            rec.clean_path = f"clean/{rec.index:05d}.wav"
            write_wav(out / rec.noisy_path, p.noisy)
            write_wav(out / rec.clean_path, p.clean)
            fh.write(json.dumps(asdict(rec)) + "\n")
    return manifest


def read_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    for r in records:
        r["noisy_path"] = str(path.parent / r["noisy_path"])
        r["clean_path"] = str(path.parent / r["clean_path"])
    return records
