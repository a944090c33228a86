"""Per-task draft construction by probability-space adaptation of a shared base draft."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from taskspec.lm import NgramModel, Vocab, load_model, save_model, tokenize, train_ngram
from taskspec.partition import ClusteredDataset, PromptRecord


class AdaptedModel:
    """(1 - mu) * base + mu * cluster, mixed lazily per query; the base is never touched."""

    def __init__(self, base: NgramModel, cluster: NgramModel, mu: float):
        if not 0.0 <= mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if cluster.vocab != base.vocab:
            raise ValueError("cluster model must share the base vocabulary")
        self.base = base
        self.cluster = cluster
        self.mu = mu
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab(self) -> Vocab:
        return self.base.vocab

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        n = max(self.base.order, self.cluster.order) - 1
        key = tuple(context[-n:]) if n and len(context) else ()
        dist = self._cache.get(key)
        if dist is None:
            dist = ((1.0 - self.mu) * self.base.next_distribution(context)
                    + self.mu * self.cluster.next_distribution(context))
            dist.setflags(write=False)
            self._cache[key] = dist
        return dist

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, AdaptedModel) and self.mu == other.mu
                and self.base == other.base and self.cluster == other.cluster)

    def __repr__(self) -> str:
        return f"AdaptedModel(mu={self.mu}, cluster={self.cluster!r})"


def adapt_draft(base: NgramModel, cluster_corpus: Sequence[Sequence[int]], mu: float = 0.8,
                cluster_order: int | None = None) -> AdaptedModel:
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if len(cluster_corpus) == 0:
        raise ValueError("cannot adapt on empty cluster")
    order = base.order if cluster_order is None else cluster_order
    cluster = train_ngram(cluster_corpus, order, base.lam, vocab=base.vocab)
    return AdaptedModel(base, cluster, mu)


def record_sequence(rec: PromptRecord, vocab: Vocab) -> list[int]:
    """Token ids of a collected <input, output> pair as one training sequence."""
    text = rec.input if not rec.output else f"{rec.input} {rec.output}"
    return tokenize(text, vocab)


def corpus_digest(seqs: Sequence[Sequence[int]]) -> str:
    h = hashlib.sha256()
    for s in seqs:
        h.update(" ".join(map(str, s)).encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class DraftSet:
    base: NgramModel
    per_task: dict[int, AdaptedModel]
    mu: float
    manifest: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.per_task)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(self.base, out / "base.json")
        for cid, model in sorted(self.per_task.items()):
            save_model(model.cluster, out / f"task_{cid}.json")
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, out_dir: str | Path) -> "DraftSet":
        out = Path(out_dir)
        manifest = json.loads((out / "manifest.json").read_text())
        base = load_model(out / "base.json")
        mu = manifest["mu"]
        per_task = {int(c): AdaptedModel(base, load_model(out / f"task_{c}.json"), mu)
                    for c in manifest["clusters"]}
        return cls(base, per_task, mu, manifest)


def build_draft_set(base: NgramModel, clusters: ClusteredDataset, mu: float = 0.8,
                    cap: int | None = None, cluster_order: int | None = None) -> DraftSet:
    """One adapted draft per cluster id; at most ``cap`` records per cluster are used."""
    per_task: dict[int, AdaptedModel] = {}
    info: dict[str, dict] = {}
    for cid in range(clusters.k):
        recs = clusters.subsets.get(cid, [])
        if not recs:
            raise ValueError(f"cluster {cid} is empty")
        seqs = [record_sequence(r, base.vocab) for r in recs[:cap]]
        per_task[cid] = adapt_draft(base, seqs, mu, cluster_order)
        info[str(cid)] = {"size": len(recs), "used": len(seqs), "sha256": corpus_digest(seqs)}
    manifest = {"mu": mu, "cap": cap, "clusters": info, "base_order": base.order,
                "cluster_order": cluster_order or base.order}
    return DraftSet(base, per_task, mu, manifest)


def build_unary_draft(base: NgramModel, clusters: ClusteredDataset, mu: float = 0.8,
                      cap: int | None = None, cluster_order: int | None = None) -> AdaptedModel:
    """Single draft adapted on the union of all clusters.

    The union gets the same record budget ``cap`` as one task draft, filled
    round-robin across clusters so every task is equally represented.
    """
    pools = [clusters.subsets.get(c, []) for c in range(clusters.k)]
    union: list[PromptRecord] = []
    for i in range(max((len(p) for p in pools), default=0)):
        union.extend(p[i] for p in pools if i < len(p))
    seqs = [record_sequence(r, base.vocab) for r in union[:cap]]
    return adapt_draft(base, seqs, mu, cluster_order)
