"""End-to-end pipeline (collect -> cluster -> adapt -> route -> decode) and benchmarks."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from taskspec.corpus import CorpusSpec, DomainGenerator, domain_vocabularies, gen_corpus
from taskspec.forge import AdaptedModel, DraftSet, build_draft_set, build_unary_draft
from taskspec.lm import NgramModel, Vocab, load_model, save_model, tokenize, train_ngram
from taskspec.partition import (ClusteredDataset, PromptRecord, cluster_accuracy, embed_corpus,
                                kmeans_cluster, load_clusters, preprocess, read_jsonl,
                                save_clusters, write_jsonl)
from taskspec.router import RouterModel, route, train_router
from taskspec.specdec import DecodeStats, decode_autoregressive, speculative_decode

log = logging.getLogger(__name__)

METHODS = ("autoregressive", "vanilla", "unary", "taskspec", "random_route")
CSV_HEADER = ["method", "domain", "gamma", "acceptance_rate", "tau", "speedup", "route_ms", "seed"]


@dataclass
class LMConfig:
    target_order: int = 4
    draft_order: int = 2
    lam: float = 0.9
    base_fraction: float = 0.25  # share of training docs the base draft sees


@dataclass
class PartitionConfig:
    k: int = 4
    hash_dim: int = 32768
    reduce_dim: int = 64
    seed: int = 0
    max_iter: int = 100
    tol: float = 1e-6
    n_init: int = 4
    include_output: bool = False


@dataclass
class ForgeConfig:
    mu: float = 0.8
    cap: int | None = 256  # desk-scale record budget per draft
    cluster_order: int | None = None


@dataclass
class RouterConfig:
    hash_dim: int = 4096
    split: float = 0.8
    epochs: int = 20
    lr: float = 1.0  # mean-pooled features are small; 0.1 underfits
    seed: int = 0
    use_true_labels: bool = False


@dataclass
class BenchConfig:
    gammas: list[int] = field(default_factory=lambda: list(range(1, 11)))
    methods: list[str] = field(default_factory=lambda: ["vanilla", "unary", "taskspec", "random_route"])
    prompts_per_domain: int = 100
    max_tokens: int = 48
    mode: str = "greedy"
    clock: str = "cost"  # "cost": billed pass costs; "wall": monotonic clock with emulated latency
    draft_cost: float = 0.05  # draft pass cost relative to one target pass
    target_latency_ms: float = 1.0  # emulated target pass latency in "wall" mode
    collect_gamma: int = 4
    seed: int = 0


@dataclass
class PipelineConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    lm: LMConfig = field(default_factory=LMConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    forge: ForgeConfig = field(default_factory=ForgeConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    prompt_len: int = 16
    train_fraction: float = 0.6
    collect_fraction: float = 0.3

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        parts = {"corpus": CorpusSpec, "lm": LMConfig, "partition": PartitionConfig,
                 "forge": ForgeConfig, "router": RouterConfig, "bench": BenchConfig}
        kwargs = {}
        for key, value in d.items():
            kwargs[key] = parts[key](**value) if key in parts else value
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        return cls.from_dict(json.loads(Path(path).read_text()))


class MissingArtifact(RuntimeError):
    pass


@dataclass
class BenchRow:
    method: str
    domain: int
    gamma: int
    acceptance_rate: float
    tau: float
    speedup: float
    route_ms: float
    seed: int
    tau_with_bonus: float = 0.0
    wall_speedup: float = 0.0

    def csv_row(self) -> list:
        return [self.method, self.domain, self.gamma, repr(self.acceptance_rate), repr(self.tau),
                repr(self.speedup), f"{self.route_ms:.6f}", self.seed]


# --- corpus / models -----------------------------------------------------

@dataclass
class CorpusSplit:
    records: list[PromptRecord]
    generators: list[DomainGenerator]
    vocab: Vocab
    train: list[PromptRecord]
    collect: list[PromptRecord]  # prompts, labelled with their true domain
    test: list[PromptRecord]


def prompt_of(rec: PromptRecord, prompt_len: int) -> PromptRecord:
    words = rec.input.split()[:prompt_len]
    return PromptRecord(" ".join(words), true_label=rec.true_label, explicit_tag=rec.explicit_tag)


def build_vocab(spec: CorpusSpec) -> Vocab:
    vocab = Vocab()
    for words in domain_vocabularies(spec):
        for w in words:
            vocab.add(w)
    return vocab


def split_corpus(cfg: PipelineConfig) -> CorpusSplit:
    records, gens = gen_corpus(cfg.corpus)
    n = cfg.corpus.docs_per_domain
    n_train = int(round(cfg.train_fraction * n))
    n_collect = int(round(cfg.collect_fraction * n))
    train, collect, test = [], [], []
    for d in range(cfg.corpus.k_domains):
        docs = records[d * n:(d + 1) * n]
        train += docs[:n_train]
        collect += [prompt_of(r, cfg.prompt_len) for r in docs[n_train:n_train + n_collect]]
        test += [prompt_of(r, cfg.prompt_len) for r in docs[n_train + n_collect:]]
    return CorpusSplit(records, gens, build_vocab(cfg.corpus), train, collect, test)


def train_models(cfg: PipelineConfig, split: CorpusSplit) -> tuple[NgramModel, NgramModel]:
    """Target: high order on every training doc.  Base draft: low order on a uniform subsample."""
    seqs = [tokenize(r.input, split.vocab) for r in split.train]
    target = train_ngram(seqs, cfg.lm.target_order, cfg.lm.lam, split.vocab)
    rng = np.random.default_rng([cfg.corpus.seed, 4242])
    n_base = max(1, int(round(cfg.lm.base_fraction * len(seqs))))
    pick = np.sort(rng.choice(len(seqs), size=n_base, replace=False))
    base = train_ngram([seqs[i] for i in pick], cfg.lm.draft_order, cfg.lm.lam, split.vocab)
    return target, base


def collect_dataset(target, base_draft, prompts: Sequence[PromptRecord], gamma: int = 4,
                    mode: str = "greedy", seed: int = 0, max_tokens: int = 48) -> list[PromptRecord]:
    """Serve every prompt with vanilla speculative decoding and keep <input, output>."""
    vocab = target.vocab
    out = []
    for i, rec in enumerate(prompts):
        ids = tokenize(rec.input, vocab)
        toks, _ = speculative_decode(target, base_draft, ids, gamma, max_tokens, mode,
                                     rng_seed=seed + i)
        out.append(PromptRecord(rec.input, " ".join(vocab.decode(toks)), rec.true_label,
                                rec.explicit_tag))
    return out


def cluster_records(cfg: PipelineConfig, records: Sequence[PromptRecord]) -> ClusteredDataset:
    pc = cfg.partition
    docs = []
    for r in records:
        text = f"{r.input} {r.output}" if pc.include_output and r.output else r.input
        docs.append(preprocess(text))
    points = embed_corpus(docs, pc.hash_dim, pc.reduce_dim, pc.seed)
    clusters = kmeans_cluster(points, pc.k, pc.seed, pc.max_iter, pc.tol, pc.n_init)
    return clusters.attach(list(records))


# --- in-memory pipeline ----------------------------------------------------

@dataclass
class Artifacts:
    split: CorpusSplit
    target: NgramModel
    base: NgramModel
    collected: list[PromptRecord]
    clusters: ClusteredDataset
    cluster_acc: float
    drafts: DraftSet
    unary: AdaptedModel
    router: RouterModel
    router_acc: float


def build_pipeline(cfg: PipelineConfig) -> Artifacts:
    split = split_corpus(cfg)
    target, base = train_models(cfg, split)
    collected = collect_dataset(target, base, split.collect, cfg.bench.collect_gamma,
                                cfg.bench.mode, cfg.bench.seed, cfg.bench.max_tokens)
    clusters = cluster_records(cfg, collected)
    acc = cluster_accuracy(clusters, [r.true_label for r in collected])
    log.info("clustering accuracy %.4f, sizes %s", acc, clusters.sizes)
    drafts = build_draft_set(base, clusters, cfg.forge.mu, cfg.forge.cap, cfg.forge.cluster_order)
    unary = build_unary_draft(base, clusters, cfg.forge.mu, cfg.forge.cap, cfg.forge.cluster_order)
    router, racc = fit_router(cfg, collected, clusters)
    return Artifacts(split, target, base, collected, clusters, acc, drafts, unary, router, racc)


def fit_router(cfg: PipelineConfig, collected: Sequence[PromptRecord],
               clusters: ClusteredDataset) -> tuple[RouterModel, float]:
    rc = cfg.router
    labels = ([r.true_label for r in collected] if rc.use_true_labels
              else clusters.assignments.tolist())
    return train_router(collected, rc.split, rc.epochs, rc.lr, rc.seed, rc.hash_dim, labels=labels)


# --- benchmarking ----------------------------------------------------------

def _spin(seconds: float) -> None:
    end = time.perf_counter() + seconds
    while time.perf_counter() < end:
        pass


class LatencyModel:
    """Wraps a model so every forward pass costs at least ``seconds`` of wall time.

    ``batch_distributions`` evaluates several prefixes as one pass, the way a
    target verifies all drafted positions at once.
    """

    def __init__(self, model, seconds: float):
        self.model = model
        self.seconds = seconds

    @property
    def vocab(self):
        return self.model.vocab

    def next_distribution(self, context):
        _spin(self.seconds)
        return self.model.next_distribution(context)

    def batch_distributions(self, contexts):
        _spin(self.seconds)
        return [self.model.next_distribution(c) for c in contexts]


def _cost(stats: DecodeStats, draft_cost: float) -> float:
    return stats.target_passes + draft_cost * stats.draft_passes


def bench_sweep(cfg: PipelineConfig, art: Artifacts | None, csv_path: str | Path | None = None,
                json_path: str | Path | None = None) -> list[BenchRow]:
    """Run every method x domain x gamma cell on held-out prompts."""
    if art is None:
        raise MissingArtifact("no pipeline artifacts: run the pipeline stages first")
    bc = cfg.bench
    bad = [m for m in bc.methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown methods {bad}")
    wall = bc.clock == "wall"
    if bc.clock not in ("cost", "wall"):
        raise ValueError(f"unknown clock {bc.clock!r}")
    tgt_s = bc.target_latency_ms / 1000.0
    target = LatencyModel(art.target, tgt_s) if wall else art.target

    def wrap(draft):
        return LatencyModel(draft, tgt_s * bc.draft_cost) if wall else draft

    vocab = art.target.vocab
    domains = sorted({r.true_label for r in art.split.test})
    prompts = {d: [r for r in art.split.test if r.true_label == d][:bc.prompts_per_domain]
               for d in domains}
    k = art.drafts.k

    # route once per prompt; the choice does not depend on gamma
    routed: dict[tuple[int, int], tuple[int, float]] = {}
    for d in domains:
        for i, rec in enumerate(prompts[d]):
            t0 = time.perf_counter()
            draft = route(art.router, rec, art.drafts)
            ms = (time.perf_counter() - t0) * 1000.0
            cid = next(c for c, m in art.drafts.per_task.items() if m is draft)
            routed[(d, i)] = (cid, ms)

    def seed_for(d, i):
        return int(np.random.SeedSequence([bc.seed, d, i]).generate_state(1)[0])

    baseline: dict[int, tuple[float, float]] = {}
    for d in domains:
        cost = wall_t = 0.0
        for i, rec in enumerate(prompts[d]):
            ids = tokenize(rec.input, vocab)
            rs = None if bc.mode == "greedy" else seed_for(d, i)
            _, st = decode_autoregressive(target, ids, bc.max_tokens, rs)
            cost += st.target_passes
            wall_t += st.wall_time
        baseline[d] = (cost, wall_t)

    rows: list[BenchRow] = []
    for method in bc.methods:
        for d in domains:
            if method == "autoregressive":
                rows.append(BenchRow(method, d, 0, 0.0, 0.0, 1.0, 0.0, bc.seed, 1.0, 1.0))
                continue
            for gamma in bc.gammas:
                total = DecodeStats()
                route_ms = 0.0
                for i, rec in enumerate(prompts[d]):
                    if method == "vanilla":
                        draft = art.base
                    elif method == "unary":
                        draft = art.unary
                    elif method == "taskspec":
                        cid, ms = routed[(d, i)]
                        draft = art.drafts.per_task[cid]
                        route_ms += ms
                    else:
                        pick = np.random.default_rng([bc.seed, d, i, 99]).integers(k)
                        draft = art.drafts.per_task[int(pick)]
                    ids = tokenize(rec.input, vocab)
                    _, st = speculative_decode(target, wrap(draft), ids, gamma, bc.max_tokens,
                                               bc.mode, seed_for(d, i))
                    total += st
                passes = max(total.target_passes, 1)
                rate = total.accepted_tokens / total.drafted_tokens if total.drafted_tokens else 0.0
                cost_speedup = baseline[d][0] / _cost(total, bc.draft_cost)
                wall_speedup = baseline[d][1] / total.wall_time if total.wall_time > 0 else 0.0
                rows.append(BenchRow(
                    method, d, gamma, rate, total.accepted_tokens / passes,
                    wall_speedup if wall else cost_speedup,
                    route_ms / max(len(prompts[d]), 1), bc.seed,
                    (total.accepted_tokens + total.target_passes) / passes, wall_speedup))
    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (order[r.method], r.domain, r.gamma))
    if csv_path is not None:
        write_bench_csv(rows, csv_path)
    if json_path is not None:
        Path(json_path).write_text(json.dumps([dataclasses.asdict(r) for r in rows], indent=1))
    return rows


def write_bench_csv(rows: Sequence[BenchRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_row())


def cap_sweep(cfg: PipelineConfig, art: Artifacts, caps: Sequence[int] = (16, 64, 128, 256),
              gamma: int = 5) -> list[dict]:
    """Average acceptance length of routed task drafts as the per-cluster cap varies."""
    rows = []
    for cap in caps:
        drafts = build_draft_set(art.base, art.clusters, cfg.forge.mu, cap, cfg.forge.cluster_order)
        sub = dataclasses.replace(art, drafts=drafts)
        sub_cfg = dataclasses.replace(cfg, bench=dataclasses.replace(
            cfg.bench, gammas=[gamma], methods=["taskspec"]))
        for r in bench_sweep(sub_cfg, sub):
            rows.append({"cap": cap, "domain": r.domain, "gamma": gamma, "tau": r.tau,
                         "acceptance_rate": r.acceptance_rate})
    return rows


# --- on-disk stages ----------------------------------------------------------

class Workspace:
    """File layout shared by the CLI stages."""

    def __init__(self, root: str | Path, cfg: PipelineConfig):
        self.root = Path(root)
        self.cfg = cfg
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifact(f"missing {p}: run the `{stage}` stage first")
        return p

    def gen_corpus(self) -> CorpusSplit:
        split = split_corpus(self.cfg)
        write_jsonl(split.records, self.path("corpus.jsonl"))
        write_jsonl(split.train, self.path("train.jsonl"))
        write_jsonl(split.collect, self.path("collect_prompts.jsonl"))
        write_jsonl(split.test, self.path("test_prompts.jsonl"))
        self.path("vocab.json").write_text(json.dumps(split.vocab.tokens))
        return split

    def _split(self) -> CorpusSplit:
        self.require("corpus.jsonl", "gen-corpus")
        return split_corpus(self.cfg)

    def collect(self) -> list[PromptRecord]:
        split = self._split()
        target, base = train_models(self.cfg, split)
        save_model(target, self.path("target.json"))
        save_model(base, self.path("base_draft.json"))
        bc = self.cfg.bench
        collected = collect_dataset(target, base, split.collect, bc.collect_gamma, bc.mode,
                                    bc.seed, bc.max_tokens)
        write_jsonl(collected, self.path("collected.jsonl"))
        return collected

    def cluster(self) -> tuple[ClusteredDataset, float]:
        collected = read_jsonl(self.require("collected.jsonl", "collect"))
        clusters = cluster_records(self.cfg, collected)
        acc = cluster_accuracy(clusters, [r.true_label for r in collected])
        save_clusters(clusters, self.path("clusters"), self.cfg.partition.seed,
                      dataclasses.asdict(self.cfg.partition) | {"accuracy": acc})
        return clusters, acc

    def adapt(self) -> DraftSet:
        base = load_model(self.require("base_draft.json", "collect"))
        self.require("clusters/manifest.json", "cluster")
        clusters = load_clusters(self.path("clusters"))
        fc = self.cfg.forge
        drafts = build_draft_set(base, clusters, fc.mu, fc.cap, fc.cluster_order)
        drafts.save(self.path("drafts"))
        unary = build_unary_draft(base, clusters, fc.mu, fc.cap, fc.cluster_order)
        save_model(unary.cluster, self.path("unary_task.json"))
        return drafts

    def train_router(self) -> tuple[RouterModel, float]:
        collected = read_jsonl(self.require("collected.jsonl", "collect"))
        self.require("clusters/manifest.json", "cluster")
        router, acc = fit_router(self.cfg, collected, load_clusters(self.path("clusters")))
        router.save(self.path("router.json"))
        return router, acc

    def load_artifacts(self) -> Artifacts:
        split = self._split()
        target = load_model(self.require("target.json", "collect"))
        base = load_model(self.require("base_draft.json", "collect"))
        collected = read_jsonl(self.require("collected.jsonl", "collect"))
        self.require("clusters/manifest.json", "cluster")
        clusters = load_clusters(self.path("clusters"))
        self.require("drafts/manifest.json", "adapt")
        drafts = DraftSet.load(self.path("drafts"))
        unary = AdaptedModel(base, load_model(self.require("unary_task.json", "adapt")), drafts.mu)
        router = RouterModel.load(self.require("router.json", "train-router"))
        acc = cluster_accuracy(clusters, [r.true_label for r in collected])
        return Artifacts(split, target, base, collected, clusters, acc, drafts, unary, router,
                         float("nan"))

    def bench(self) -> list[BenchRow]:
        art = self.load_artifacts()
        return bench_sweep(self.cfg, art, self.path("bench.csv"), self.path("bench.json"))
