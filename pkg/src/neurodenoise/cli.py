"""Command-line entry point: ``neurodenoise <command> ...``.

Exit codes: 0 ok, 1 runtime failure (e.g. a failed gradient check),
2 config error, 3 I/O error, 4 checkpoint mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig, TrainingConfig, load_config
from .datasynth import MixSpec, SynthError, read_manifest, synth_pairset, toy_corpora, write_pairset
from .model import SpikingFullSubNet
from .profiler import profile_traces
from .spectral import SpectralError
from .streaming import algorithmic_latency_s, enhance, enhance_streaming
from .trainer import Trainer, grad_check
from .wavio import WavFormatError, read_wav, write_wav

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_CHECKPOINT = 0, 1, 2, 3, 4

log = logging.getLogger("neurodenoise")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _configs(path) -> tuple[ModelConfig, TrainingConfig]:
    if path is None:
        return ModelConfig(), TrainingConfig()
    try:
        return load_config(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_CONFIG) from exc


def _model(args) -> SpikingFullSubNet:
    cfg = _configs(args.config)[0] if args.config else None
    return load_checkpoint(args.model, cfg)


def _read_audio(path):
    try:
        return read_wav(path)
    except (OSError, WavFormatError, SpectralError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


# -- commands -------------------------------------------------------------------

def cmd_enhance(args) -> int:
    model = _model(args)
    audio = _read_audio(args.inp)
    t0 = time.perf_counter()
    with torch.no_grad():
        res = enhance_streaming(model, audio) if args.stream else enhance(model, audio)
    wall = time.perf_counter() - t0
    try:
        write_wav(args.out, res.audio)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    log.info("enhanced %.2f s of audio in %.2f s (RTF %.3f)", audio.duration, wall,
             wall / max(audio.duration, 1e-9))
    if args.report:
        rep = profile_traces(model, res.runs, audio.duration, res.spec.T)
        _write_text(args.report, rep.to_json())
    return EXIT_OK


def cmd_profile(args) -> int:
    model = _model(args)
    audio = _read_audio(args.inp)
    with torch.no_grad():
        res = enhance(model, audio)
    rep = profile_traces(model, res.runs, audio.duration, res.spec.T)
    print(rep.table())
    print(f"algorithmic latency: {algorithmic_latency_s(model.cfg.stft) * 1e3:.2f} ms")
    if args.report:
        _write_text(args.report, rep.to_json())
    return EXIT_OK


def _load_pairs(manifest):
    try:
        records = read_manifest(manifest)
        return [(read_wav(r["noisy_path"]).samples, read_wav(r["clean_path"]).samples)
                for r in records]
    except (OSError, KeyError, json.JSONDecodeError, WavFormatError, SpectralError) as exc:
        raise CliError(f"cannot load data from {manifest}: {exc}", EXIT_IO) from exc


def cmd_train(args) -> int:
    mcfg, tcfg = _configs(args.config)
    if args.epochs is not None:
        tcfg = replace(tcfg, max_epochs=args.epochs)
    if args.time_budget is not None:
        tcfg = replace(tcfg, time_budget_s=args.time_budget)
    tcfg = replace(tcfg, seed=args.seed)
    pairs = _load_pairs(args.data)
    if args.heldout:
        held = _load_pairs(args.heldout)
    else:
        n_held = max(1, len(pairs) // 10) if len(pairs) > 1 else 0
        pairs, held = pairs[:len(pairs) - n_held], pairs[len(pairs) - n_held:]
    if not pairs:
        raise CliError("no training pairs", EXIT_IO)
    torch.manual_seed(args.seed)
    model = SpikingFullSubNet(mcfg)
    log_path = Path(args.log or str(args.out) + ".log.jsonl")
    lines = []

    def on_epoch(entry):
        lines.append(json.dumps(asdict(entry)))
        print(f"epoch {entry.epoch:3d}  loss {entry.loss:.4f}  si_snr {entry.si_snr:.2f} dB  "
              f"si_snr_i {entry.si_snr_i:.2f} dB  ({entry.seconds:.0f} s)", flush=True)

    Trainer(model, tcfg).fit(pairs, held, on_epoch=on_epoch)
    try:
        save_checkpoint(model, args.out)
        log_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc}", EXIT_IO) from exc
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    mcfg = _configs(args.config)[0] if args.config else ModelConfig.tiny()
    torch.manual_seed(args.seed)
    model = SpikingFullSubNet(mcfg)
    rng = np.random.default_rng(args.seed)
    L = mcfg.stft.n_samples(args.frames)
    clean = rng.standard_normal((2, L)) * 0.3
    noisy = clean + rng.standard_normal((2, L)) * 0.2
    res = grad_check(model, (noisy, clean), eps=args.eps, n_params=args.n_params, seed=args.seed)
    for module, err in sorted(res.per_module.items()):
        print(f"  {module:28s} {err:.3e}")
    print(f"checked {res.n_checked} parameters ({res.n_skipped} skipped near kinks)")
    print(f"max relative error {res.max_rel_error:.3e}")
    return EXIT_OK if res.max_rel_error < args.tol else EXIT_FAIL


def cmd_synthdata(args) -> int:
    doc = {}
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except OSError as exc:
            raise CliError(f"cannot read {args.spec}: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.spec}: not valid JSON ({exc})", EXIT_CONFIG) from exc
    corpus = doc.pop("toy_corpus", {})
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = MixSpec(**doc)
        sources, noises = toy_corpora(**corpus)
        pairs = synth_pairset(sources, noises, spec)
    except (TypeError, SynthError) as exc:
        raise CliError(f"bad synthesis spec: {exc}", EXIT_CONFIG) from exc
    try:
        manifest = write_pairset(pairs, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(manifest)
    return EXIT_OK


def cmd_params(args) -> int:
    counts = SpikingFullSubNet(_configs(args.config)[0]).param_counts()
    for name, n in counts.items():
        print(f"{name:12s} {n:>10,d}")
    return EXIT_OK


# -- wiring --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurodenoise", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--model", required=True, help="checkpoint file")
        sp.add_argument("--config", help="config JSON; its hash must match the checkpoint")
        sp.add_argument("--in", dest="inp", required=True, help="16 kHz mono 16-bit WAV")
        sp.add_argument("--report", help="write a PowerReport JSON here")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("enhance", help="denoise a WAV file")
    model_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stream", action="store_true", help="process hop-sized chunks")
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("profile", help="SynOPs / NeuronOPs / power report for one input")
    model_args(sp)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("train", help="BPTT training from a pair manifest")
    sp.add_argument("--config")
    sp.add_argument("--data", required=True, help="manifest.jsonl from synthdata")
    sp.add_argument("--heldout", help="separate held-out manifest (default: last 10%%)")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--time-budget", type=float, help="seconds")
    sp.add_argument("--log", help="per-epoch JSON-lines metrics (default: <out>.log.jsonl)")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("gradcheck", help="relaxed-mode finite-difference gradient check")
    sp.add_argument("--config", help="model config (default: the tiny preset)")
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.add_argument("--n-params", type=int, default=200)
    sp.add_argument("--frames", type=int, default=10)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("synthdata", help="write noisy/clean WAV pairs and a manifest")
    sp.add_argument("--spec", help="JSON with MixSpec fields and an optional toy_corpus block")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synthdata)

    sp = sub.add_parser("params", help="trainable parameter counts")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("NEURODENOISE_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
