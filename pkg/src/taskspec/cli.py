"""Command-line entry point: one subcommand per pipeline stage plus run/route/simulate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext

from taskspec.forge import DraftSet
from taskspec.harness import MissingArtifact, PipelineConfig, Workspace
from taskspec.lm import load_model, tokenize
from taskspec.partition import PromptRecord, embed_corpus, preprocess, read_jsonl, silhouette_sweep
from taskspec.perf import SpeedupParams, simulate_speculative, theoretical_speedup
from taskspec.router import RouterModel, classify, route
from taskspec.specdec import compute_stats, speculative_decode


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _workspace(args) -> Workspace:
    return Workspace(args.workdir, PipelineConfig.load(args.config))


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_gen_corpus(args) -> None:
    split = _workspace(args).gen_corpus()
    _print({"records": len(split.records), "train": len(split.train),
            "collect": len(split.collect), "test": len(split.test), "vocab": len(split.vocab)})


def cmd_collect(args) -> None:
    _print({"collected": len(_workspace(args).collect())})


def cmd_cluster(args) -> None:
    ws = _workspace(args)
    clusters, acc = ws.cluster()
    report = {"k": clusters.k, "sizes": clusters.sizes, "accuracy": acc}
    if args.silhouette:
        pc = ws.cfg.partition
        recs = read_jsonl(ws.path("collected.jsonl"))
        points = embed_corpus([preprocess(r.input) for r in recs], pc.hash_dim, pc.reduce_dim, pc.seed)
        report["silhouette"] = silhouette_sweep(points, args.silhouette, pc.seed)
    _print(report)


def cmd_adapt(args) -> None:
    drafts = _workspace(args).adapt()
    _print({"drafts": drafts.k, "mu": drafts.mu, "cap": drafts.manifest["cap"]})


def cmd_train_router(args) -> None:
    router, acc = _workspace(args).train_router()
    _print({"classes": router.classes, "val_accuracy": acc, **router.train_meta})


def _tag_map(text: str | None) -> dict[str, int] | None:
    if not text:
        return None
    return {k: int(v) for k, v in (kv.split("=") for kv in text.split(","))}


def cmd_route(args) -> None:
    ws = _workspace(args)
    router = RouterModel.load(ws.require("router.json", "train-router"))
    label, probs = classify(router, args.prompt)
    _print({"label": label, "confidence": probs.tolist(), "keywords": preprocess(args.prompt)})


def cmd_run(args) -> None:
    ws = _workspace(args)
    target = load_model(ws.require("target.json", "collect"))
    ws.require("drafts/manifest.json", "adapt")
    drafts = DraftSet.load(ws.path("drafts"))
    tags = _tag_map(args.tag_map)
    router = None
    if args.tag is None:
        router = RouterModel.load(ws.require("router.json", "train-router"))
    rec = PromptRecord(args.prompt, explicit_tag=args.tag)
    draft = route(router, rec, drafts, tags)
    cid = next(c for c, m in drafts.per_task.items() if m is draft)
    trace: list[dict] = []
    out, stats = speculative_decode(target, draft, tokenize(args.prompt, target.vocab), args.gamma,
                                    args.max_tokens, args.mode, args.seed, trace)
    if args.trace:
        with open(args.trace, "w") as f:
            for row in trace:
                f.write(json.dumps(row) + "\n")
    rate, tau, _ = compute_stats(stats) if stats.drafted_tokens else (0.0, 0.0, 0.0)
    _print({"draft": cid, "output": " ".join(target.vocab.decode(out)), "acceptance_rate": rate,
            "tau": tau, "target_passes": stats.target_passes, "output_tokens": stats.output_tokens})


def cmd_bench(args) -> None:
    ws = _workspace(args)
    rows = ws.bench()
    print(f"wrote {len(rows)} rows to {ws.path('bench.csv')}")


def cmd_simulate(args) -> None:
    with open(args.out, "w", newline="") if args.out else nullcontext(sys.stdout) as f:
        _simulate_rows(csv.writer(f), args)


def _simulate_rows(w, args) -> None:
    w.writerow(["alpha", "gamma", "c", "theoretical", "simulated", "rel_error"])
    for alpha in args.alphas:
        for gamma in args.gammas:
            for c in args.cs:
                p = SpeedupParams(alpha, c, gamma)
                theo = theoretical_speedup(p)
                sim = simulate_speculative(p, args.n_tokens, args.seed, decay=args.decay).simulated_speedup
                w.writerow([alpha, gamma, c, f"{theo:.6f}", f"{sim:.6f}", f"{abs(sim - theo) / theo:.6f}"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskspec", description=__doc__)
    parser.add_argument("--config", help="pipeline config JSON (defaults apply when omitted)")
    parser.add_argument("--workdir", default="runs/default", help="artifact directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-corpus", help="generate and split the synthetic corpus").set_defaults(fn=cmd_gen_corpus)
    sub.add_parser("collect", help="train target/base and collect outputs").set_defaults(fn=cmd_collect)
    p = sub.add_parser("cluster", help="partition collected pairs into tasks")
    p.add_argument("--silhouette", type=int, metavar="K_MAX", help="also report silhouette for k in [2, K_MAX]")
    p.set_defaults(fn=cmd_cluster)
    sub.add_parser("adapt", help="build per-task and unary drafts").set_defaults(fn=cmd_adapt)
    sub.add_parser("train-router", help="fit the prompt classifier").set_defaults(fn=cmd_train_router)

    p = sub.add_parser("route", help="classify one prompt")
    p.add_argument("prompt")
    p.set_defaults(fn=cmd_route)

    p = sub.add_parser("run", help="route and decode one prompt")
    p.add_argument("prompt")
    p.add_argument("--tag", help="explicit task tag (bypasses the classifier)")
    p.add_argument("--tag-map", help="tag=cluster pairs, e.g. math=2,law=0")
    p.add_argument("--gamma", type=int, default=5)
    p.add_argument("--max-tokens", type=int, default=48)
    p.add_argument("--mode", choices=["greedy", "stochastic"], default="greedy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write per-iteration JSONL trace here")
    p.set_defaults(fn=cmd_run)

    sub.add_parser("bench", help="gamma sweep over all methods").set_defaults(fn=cmd_bench)

    p = sub.add_parser("simulate", help="closed-form vs Monte Carlo speedup table (CSV)")
    p.add_argument("--alphas", type=_floats, default=[round(0.1 * i, 1) for i in range(1, 10)])
    p.add_argument("--gammas", type=_ints, default=list(range(1, 11)))
    p.add_argument("--cs", type=_floats, default=[0.05, 0.1])
    p.add_argument("--n-tokens", type=int, default=100_000)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.set_defaults(fn=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
