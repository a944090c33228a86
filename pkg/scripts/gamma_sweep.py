"""Gamma sweep over all methods on the synthetic benchmark; prints a per-method summary.

    python scripts/gamma_sweep.py --out runs/sweep [--config cfg.json] [--seeds 0,1,2]
"""

import argparse
import dataclasses
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np

from taskspec.harness import PipelineConfig, bench_sweep, build_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--seeds", default="0", help="comma-separated corpus seeds")
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    base = PipelineConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = dataclasses.replace(base, corpus=dataclasses.replace(base.corpus, seed=seed))
        art = build_pipeline(cfg)
        rows = bench_sweep(cfg, art, out / f"bench_seed{seed}.csv", out / f"bench_seed{seed}.json")
        agg = defaultdict(list)
        for r in rows:
            agg[r.method, r.gamma].append(r)
        print(f"\nseed {seed}: clustering acc {art.cluster_acc:.3f}, router val acc {art.router_acc:.3f}")
        print(f"{'method':>13} " + " ".join(f"g={g:<5}" for g in cfg.bench.gammas))
        for metric in ("acceptance_rate", "tau", "speedup"):
            print(f"[{metric}]")
            for m in cfg.bench.methods:
                vals = [np.mean([getattr(r, metric) for r in agg[m, g]]) for g in cfg.bench.gammas]
                print(f"{m:>13} " + " ".join(f"{v:7.3f}" for v in vals))


if __name__ == "__main__":
    main()
