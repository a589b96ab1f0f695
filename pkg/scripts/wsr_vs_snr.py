"""Realized weighted sum rate per blockage policy versus data SNR."""

import argparse

from blockris.cli import cmd_wsr, load_config, parse_policies, parse_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="scenario JSON; defaults when omitted")
    ap.add_argument("--sweep", default="0:20:5")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--policies", default="genie,estimated,oblivious,random-phase,none")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="wsr_vs_snr.csv")
    args = ap.parse_args()
    cfg = load_config(args.config).with_(trials=args.trials)
    rows = cmd_wsr(cfg, parse_sweep(args.sweep), parse_policies(args.policies), args.out, jobs=args.jobs)
    for snr, policy, mean, se, _ in rows:
        print(f"{snr:5.1f} dB  {policy:<13} {mean:8.3f} +- {se:.3f} bit/s/Hz")


if __name__ == "__main__":
    main()
