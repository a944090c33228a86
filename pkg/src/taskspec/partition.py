"""Task partitioning: clean prompts, hash-vectorize, project, and k-means them.

Vectors are reproducible across platforms: tokens are hashed with 64-bit
FNV-1a and the projection matrix comes from a seeded PCG64 generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_KEEP_SYMBOLS = "+-"


@dataclass
class PromptRecord:
    input: str
    output: str | None = None
    true_label: int | None = None
    explicit_tag: str | None = None

    def __post_init__(self):
        if not self.input.strip():
            raise ValueError("prompt input must be non-empty")

    def to_json(self) -> dict:
        d: dict = {"input": self.input}
        if self.output is not None:
            d["output"] = self.output
        if self.true_label is not None:
            d["label"] = self.true_label
        if self.explicit_tag is not None:
            d["tag"] = self.explicit_tag
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PromptRecord":
        return cls(d["input"], d.get("output"), d.get("label"), d.get("tag"))


def write_jsonl(records: Iterable[PromptRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[PromptRecord]:
    with open(path, encoding="utf-8") as f:
        return [PromptRecord.from_json(json.loads(line)) for line in f if line.strip()]


@dataclass
class ClusteredDataset:
    k: int
    assignments: np.ndarray  # record index -> cluster id
    centroids: np.ndarray  # (k, d)
    subsets: dict[int, list[PromptRecord]] = field(default_factory=dict)
    inertia_history: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()

    def attach(self, records: Sequence[PromptRecord]) -> "ClusteredDataset":
        if len(records) != len(self.assignments):
            raise ValueError("record count does not match assignments")
        self.subsets = {c: [] for c in range(self.k)}
        for rec, c in zip(records, self.assignments):
            self.subsets[int(c)].append(rec)
        return self


# --- preprocessing -------------------------------------------------------

@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    text = resources.files("taskspec").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def _clean_token(tok: str) -> str:
    kept = "".join(ch for ch in tok if ch.isalnum() or ch in _KEEP_SYMBOLS)
    kept = kept.strip(_KEEP_SYMBOLS)
    return kept if any(ch.isalnum() for ch in kept) else ""


def preprocess(text: str, stopwords: Iterable[str] | None = None) -> list[str]:
    """Lowercase, drop special characters and stopwords, keep order.

    '+' and '-' survive inside a token ("2+3", "counter-security").
    """
    stop = default_stopwords() if stopwords is None else frozenset(stopwords)
    out = []
    for raw in text.lower().split():
        tok = _clean_token(raw)
        if tok and tok not in stop:
            out.append(tok)
    return out


# --- vectorization -------------------------------------------------------

@lru_cache(maxsize=1 << 16)
def fnv1a_64(token: str) -> int:
    h = FNV_OFFSET
    for b in token.encode("utf-8"):
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_index(token: str, dim: int) -> int:
    return fnv1a_64(token) % dim


def hashed_counts(docs: Sequence[Sequence[str]], dim: int) -> sp.csr_matrix:
    rows, cols = [], []
    for i, doc in enumerate(docs):
        for tok in doc:
            rows.append(i)
            cols.append(hash_index(tok, dim))
    data = np.ones(len(rows), dtype=np.float64)
    m = sp.csr_matrix((data, (rows, cols)), shape=(len(docs), dim))
    m.sum_duplicates()
    return m


def tfidf_matrix(docs: Sequence[Sequence[str]], hash_dim: int) -> sp.csr_matrix:
    """Hashed TF-IDF with smoothed idf, rows L2-normalized (empty rows stay zero)."""
    if len(docs) == 0:
        raise ValueError("empty corpus")
    tf = hashed_counts(docs, hash_dim)
    n = tf.shape[0]
    df = np.bincount(tf.indices, minlength=hash_dim)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    x = tf.multiply(idf[None, :]).tocsr()
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    return sp.csr_matrix(sp.diags(1.0 / norms) @ x)


def projection_matrix(hash_dim: int, reduce_dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((hash_dim, reduce_dim)) / np.sqrt(reduce_dim)


def embed_corpus(docs: Sequence[Sequence[str]], hash_dim: int = 32768, reduce_dim: int = 64,
                 seed: int = 0) -> np.ndarray:
    """TF-IDF over hashed tokens, then a seeded Gaussian random projection.

    Returns an (n_docs, reduce_dim) array; row i is the feature vector of docs[i].
    """
    if not hash_dim >= reduce_dim >= 2:
        raise ValueError("need hash_dim >= reduce_dim >= 2")
    x = tfidf_matrix(docs, hash_dim)
    return np.asarray(x @ projection_matrix(hash_dim, reduce_dim, seed))


# --- clustering ----------------------------------------------------------

def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (points ** 2).sum(axis=1)[:, None] - 2.0 * points @ centroids.T + (centroids ** 2).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers.append(points[idx])
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-centroid labels with empty-cluster repair; returns (labels, inertia)."""
    d = _sq_dists(points, centroids)
    labels = np.argmin(d, axis=1)
    counts = np.bincount(labels, minlength=len(centroids))
    own = d[np.arange(len(points)), labels]
    for c in np.flatnonzero(counts == 0):
        # empty cluster: take the point farthest from its own centroid
        far = int(np.argmax(np.where(counts[labels] > 1, own, -1.0)))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        own[far] = -1.0
    return labels, float(d[np.arange(len(points)), labels].sum())


def _lloyd(points, centroids, max_iter, tol):
    history = []
    for _ in range(max_iter):
        labels, inertia = _assign(points, centroids)
        history.append(inertia)
        new = np.array([points[labels == c].mean(axis=0) for c in range(len(centroids))])
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if shift < tol:
            break
    labels, inertia = _assign(points, centroids)
    history.append(inertia)
    return labels, centroids, history


def kmeans_cluster(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
                   tol: float = 1e-6, n_init: int = 4) -> ClusteredDataset:
    """k-means++ seeding + Lloyd iterations; best of ``n_init`` seeded restarts."""
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(points) < k:
        raise ValueError(f"need at least k={k} points, got {len(points)}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        init = _kmeans_pp(points, k, rng)
        labels, centroids, hist = _lloyd(points, init, max_iter, tol)
        if best is None or hist[-1] < best[2][-1]:
            best = (labels, centroids, hist)
    labels, centroids, hist = best
    return ClusteredDataset(k=k, assignments=labels.astype(np.int64), centroids=centroids,
                            inertia_history=hist)


def contingency(assignments: Sequence[int], labels: Sequence[int], k: int) -> np.ndarray:
    table = np.zeros((k, k), dtype=np.int64)
    for c, y in zip(assignments, labels):
        table[c, y] += 1
    return table


def cluster_accuracy(clustering: ClusteredDataset, labels: Sequence[int]) -> float:
    """Accuracy under the best one-to-one cluster <-> label matching."""
    labels = np.asarray(labels)
    if len(labels) != len(clustering.assignments):
        raise ValueError("label count does not match record count")
    uniq = np.unique(labels)
    if len(uniq) > clustering.k:
        raise ValueError("more distinct labels than clusters")
    remap = {y: i for i, y in enumerate(uniq)}
    table = contingency(clustering.assignments, [remap[y] for y in labels], clustering.k)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / len(labels)


def silhouette_sweep(points: np.ndarray, k_max: int, seed: int = 0) -> dict[int, float]:
    """Silhouette score per k in [2, k_max]; reported only, never applied."""
    from sklearn.metrics import silhouette_score

    return {k: float(silhouette_score(points, kmeans_cluster(points, k, seed).assignments))
            for k in range(2, min(k_max, len(points) - 1) + 1)}


# --- persistence ---------------------------------------------------------

def save_clusters(clusters: ClusteredDataset, out_dir: str | Path, seed: int, params: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c, recs in sorted(clusters.subsets.items()):
        write_jsonl(recs, out / f"cluster_{c}.jsonl")
    (out / "centroids.json").write_text(json.dumps(clusters.centroids.tolist()))
    manifest = {"k": clusters.k, "sizes": clusters.sizes, "centroid_file": "centroids.json",
                "assignments": clusters.assignments.tolist(), "seed": seed, "params": params}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_clusters(out_dir: str | Path) -> ClusteredDataset:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    centroids = np.array(json.loads((out / manifest["centroid_file"]).read_text()))
    ds = ClusteredDataset(k=manifest["k"], assignments=np.array(manifest["assignments"], dtype=np.int64),
                          centroids=centroids)
    ds.subsets = {c: read_jsonl(out / f"cluster_{c}.jsonl") for c in range(ds.k)}
    return ds
