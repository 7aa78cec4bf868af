"""Decay-factor histograms of GSN layers: all-zero model, random init, and a checkpoint.

    python3 scripts/decay_analysis.py [--model runs/gsn.ckpt]
"""
import argparse

import torch

from neurodenoise.checkpoint import load_checkpoint
from neurodenoise.config import ModelConfig
from neurodenoise.experiments import decay_on, held_out_clips, zero_gsn_model
from neurodenoise.model import SpikingFullSubNet


def show(label, stats):
    print(f"{label}: mean {stats.mean:.3f}  variance {stats.variance:.4f}  "
          f"in [0.45, 0.55] {stats.fraction_near_half:.1%}")
    for lo, mass in zip(stats.edges, stats.mass):
        print(f"  {lo:4.2f} {'#' * int(round(mass * 200))}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", help="trained GSN checkpoint")
    args = ap.parse_args()
    torch.set_num_threads(1)

    clips = held_out_clips()
    show("all-zero weights", decay_on(zero_gsn_model(ModelConfig.desk()), clips))
    torch.manual_seed(0)
    show("random init", decay_on(SpikingFullSubNet(ModelConfig.desk()), clips))
    if args.model:
        show(args.model, decay_on(load_checkpoint(args.model), clips))


if __name__ == "__main__":
    main()
