"""Neuron-type ablation at desk scale: same data, seed and step budget for every kind.

    python3 scripts/ablation_gsn_vs_lif.py [--kinds gsn lif plif alif] [--seeds 0 1]
"""
import argparse

import numpy as np
import torch

from neurodenoise.experiments import desk_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kinds", nargs="+", default=["gsn", "lif"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0])
    args = ap.parse_args()
    torch.set_num_threads(1)

    results = {k: [] for k in args.kinds}
    for seed in args.seeds:
        for kind in args.kinds:
            run = desk_run(kind, seed)
            results[kind].append(run.final.si_snr_i)
            print(f"seed {seed} {kind:5s} SI-SNRi {run.final.si_snr_i:6.2f} dB "
                  f"({run.steps} steps, {run.final.seconds:.0f} s)", flush=True)
    print()
    for kind, vals in results.items():
        print(f"{kind:5s} mean {np.mean(vals):6.2f} dB  over {len(vals)} seed(s)")


if __name__ == "__main__":
    main()
