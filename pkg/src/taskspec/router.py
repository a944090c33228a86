"""Lightweight prompt classifier and draft routing.

Features are mean-pooled one-hot hashes of the preprocessed tokens; the
classifier is multinomial logistic regression fit by mini-batch gradient
descent on cross-entropy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from taskspec.forge import DraftSet
from taskspec.partition import PromptRecord, hash_index, preprocess


@dataclass
class RouterModel:
    classes: int
    weights: np.ndarray  # (classes, hash_dim)
    biases: np.ndarray  # (classes,)
    preprocess_params: dict = field(default_factory=lambda: {"stopwords": "default", "hash_dim": 4096})
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("router needs at least 2 classes")
        if self.weights.shape != (self.classes, self.hash_dim):
            raise ValueError("weight matrix shape does not match classes x hash_dim")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("non-finite router weights")

    @property
    def hash_dim(self) -> int:
        return int(self.preprocess_params["hash_dim"])

    def to_dict(self) -> dict:
        return {"classes": self.classes, "weights": self.weights.tolist(),
                "biases": self.biases.tolist(), "preprocess_params": self.preprocess_params,
                "train_meta": self.train_meta}

    @classmethod
    def from_dict(cls, d: dict) -> "RouterModel":
        return cls(d["classes"], np.array(d["weights"], dtype=np.float64),
                   np.array(d["biases"], dtype=np.float64), d["preprocess_params"], d["train_meta"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "RouterModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, RouterModel) and self.classes == other.classes
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases)
                and self.preprocess_params == other.preprocess_params
                and self.train_meta == other.train_meta)


def featurize(texts: Sequence[str], hash_dim: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, text in enumerate(texts):
        toks = preprocess(text)
        for tok in toks:
            rows.append(i)
            cols.append(hash_index(tok, hash_dim))
            vals.append(1.0 / len(toks))
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(texts), hash_dim), dtype=np.float64)
    m.sum_duplicates()
    return m


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def train_router(records: Sequence[PromptRecord], split: float = 0.8, epochs: int = 20,
                 lr: float = 0.1, seed: int = 0, hash_dim: int = 4096, batch_size: int = 32,
                 labels: Sequence[int] | None = None) -> tuple[RouterModel, float]:
    """Fit on a seeded ``split`` fraction of the records, score on the rest.

    Labels default to each record's ``true_label``.  Returns the model and
    held-out accuracy (NaN when the split leaves no validation records).
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    y = np.asarray(labels if labels is not None else [r.true_label for r in records])
    if len(y) != len(records) or any(v is None for v in y):
        raise ValueError("every record needs a label")
    y = y.astype(np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("router training needs at least 2 classes")
    k = int(y.max()) + 1
    x = featurize([r.input for r in records], hash_dim)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_train = int(np.ceil(split * len(records)))
    tr, va = order[:n_train], order[n_train:]

    W = np.zeros((k, hash_dim))
    b = np.zeros(k)
    onehot = np.eye(k)
    for _ in range(epochs):
        perm = tr[rng.permutation(len(tr))]
        for s in range(0, len(perm), batch_size):
            idx = perm[s:s + batch_size]
            xb = x[idx]
            p = softmax(np.asarray(xb @ W.T) + b)
            g = (p - onehot[y[idx]]) / len(idx)
            W -= lr * np.asarray((xb.T @ g).T)
            b -= lr * g.sum(axis=0)

    meta = {"seed": seed, "epochs": epochs, "split": split, "lr": lr,
            "batch_size": batch_size, "optimizer": "minibatch-sgd",
            "n_train": int(len(tr)), "n_val": int(len(va))}
    model = RouterModel(k, W, b, {"stopwords": "default", "hash_dim": hash_dim}, meta)
    if len(va) == 0:
        return model, float("nan")
    pred = np.argmax(np.asarray(x[va] @ W.T) + b, axis=1)
    return model, float((pred == y[va]).mean())


def classify(router: RouterModel, text: str) -> tuple[int, np.ndarray]:
    """Return (label, class probabilities); empty prompts fall back to the biases."""
    x = featurize([text], router.hash_dim)
    scores = np.asarray(x @ router.weights.T).ravel() + router.biases
    probs = softmax(scores)
    return int(np.argmax(scores)), probs


def route(router: RouterModel | None, record: PromptRecord, drafts: DraftSet,
          tag_map: Mapping[str, int] | None = None):
    """Pick the draft for one prompt: explicit tag first, classifier otherwise."""
    if record.explicit_tag is not None:
        tag_map = tag_map or {}
        if record.explicit_tag not in tag_map:
            raise KeyError(f"unknown task tag {record.explicit_tag!r}")
        return drafts.per_task[tag_map[record.explicit_tag]]
    if router is None:
        raise ValueError("untagged prompt and no router to classify it")
    if router.classes != drafts.k:
        raise ValueError(f"router has {router.classes} classes but draft set has {drafts.k} drafts")
    label, _ = classify(router, record.input)
    return drafts.per_task[label]
