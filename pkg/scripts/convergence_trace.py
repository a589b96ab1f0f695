"""Per-iteration WSR of the alternating optimizer on one channel draw, plus iterations-to-95% statistics."""

import argparse
import dataclasses
import statistics

from blockris.cli import cmd_trace, load_config
from blockris.evaluation import SetPolicy, wsr_summaries


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--snr-db", type=float, default=15.0)
    ap.add_argument("--seeds", type=int, default=50, help="trials for the iterations-to-95% median")
    ap.add_argument("--init-precoder", choices=("rzf", "matched"), default="rzf")
    ap.add_argument("--out", default="convergence_trace.csv")
    args = ap.parse_args()
    cfg = load_config(args.config).with_(snr_db=args.snr_db)
    cfg = cfg.with_(crpa=dataclasses.replace(cfg.crpa, init_precoder=args.init_precoder))
    rows = cmd_trace(cfg, args.snr_db, args.out)
    for it, w, j, b in rows[:10] + rows[-1:]:
        print(f"iter {it:4d}  WSR {w:8.4f} bits  J {j:10.5f}  backtracks {b}")
    iters = wsr_summaries(cfg.with_(trials=args.seeds), [SetPolicy.GENIE])[SetPolicy.GENIE]["iters95"]
    print(f"median iterations to 95% over {len(iters)} seeds: {statistics.median(iters)}")


if __name__ == "__main__":
    main()
