"""Train the desk-scale model on the built-in toy corpus and save a checkpoint.

    python3 scripts/train_toy.py --out runs/gsn.ckpt [--neuron gsn] [--seed 0]
"""
import argparse
import json
from dataclasses import asdict, replace

import torch

from neurodenoise.checkpoint import save_checkpoint
from neurodenoise.config import TrainingConfig
from neurodenoise.experiments import desk_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--neuron", default="gsn", choices=["gsn", "lif", "plif", "alif"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, help="total BPTT steps (default: the desk preset's 1600)")
    args = ap.parse_args()
    torch.set_num_threads(1)

    cfg = TrainingConfig.desk()
    if args.steps:
        cfg = replace(cfg, max_epochs=max(1, args.steps // cfg.steps_per_epoch))
    run = desk_run(args.neuron, args.seed, cfg, on_epoch=lambda e: print(json.dumps(asdict(e)), flush=True))
    save_checkpoint(run.model, args.out)
    print(f"{args.neuron}: held-out SI-SNRi {run.final.si_snr_i:.2f} dB -> {args.out}")


if __name__ == "__main__":
    main()
