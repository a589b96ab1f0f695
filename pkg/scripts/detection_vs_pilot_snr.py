"""Mean Jaccard index of blockage detection versus pilot SNR (K=5 users, M=10 panels)."""

import argparse

from blockris.channel_model import SystemDims
from blockris.cli import cmd_detect, parse_sweep
from blockris.evaluation import ScenarioConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweep", default="-20:10:2.5")
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=1e-3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="detection_vs_pilot_snr.csv")
    args = ap.parse_args()
    cfg = ScenarioConfig(dims=SystemDims(K=5, M=10), alpha=args.alpha, p_block=0.1, trials=args.trials)
    for row in cmd_detect(cfg, parse_sweep(args.sweep), args.out, jobs=args.jobs):
        print(f"pilot SNR {row[0]:6.1f} dB  Jaccard {row[1]:.4f} +- {row[2]:.4f}")


if __name__ == "__main__":
    main()
