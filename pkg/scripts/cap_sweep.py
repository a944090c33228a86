"""Average acceptance length of routed task drafts as the per-cluster data budget grows.

    python scripts/cap_sweep.py [--caps 16,64,128,256] [--gamma 5] [--config cfg.json]
"""

import argparse
from collections import defaultdict

import numpy as np

from taskspec.harness import PipelineConfig, build_pipeline, cap_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--caps", default="16,64,128,256")
    ap.add_argument("--gamma", type=int, default=5)
    args = ap.parse_args()
    cfg = PipelineConfig.load(args.config)
    art = build_pipeline(cfg)
    caps = [int(c) for c in args.caps.split(",")]
    by_cap = defaultdict(list)
    for row in cap_sweep(cfg, art, caps, args.gamma):
        by_cap[row["cap"]].append(row)
    print("cap,mean_tau,mean_acceptance_rate")
    for cap in caps:
        rows = by_cap[cap]
        print(f"{cap},{np.mean([r['tau'] for r in rows]):.4f},"
              f"{np.mean([r['acceptance_rate'] for r in rows]):.4f}")


if __name__ == "__main__":
    main()
