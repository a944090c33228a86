"""Vocabulary, whitespace tokenization and Jelinek-Mercer interpolated n-gram models.

The same :class:`NgramModel` plays the target, the base draft and (wrapped by
:mod:`taskspec.forge`) every adapted draft.  Anything that exposes ``vocab``
and ``next_distribution(context)`` can be plugged into the decoding engine.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
BOS_ID, EOS_ID, UNK_ID = 0, 1, 2


class Vocab:
    """Dense id <-> token bijection with BOS/EOS/UNK reserved at ids 0, 1, 2."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens: list[str] = [BOS, EOS, UNK]
        self._index: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._tokens.append(token)
            self._index[token] = idx
        return idx

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def __repr__(self) -> str:
        return f"Vocab(size={len(self)})"

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocab":
        if list(tokens[:3]) != [BOS, EOS, UNK]:
            raise ValueError("serialized vocab must start with BOS, EOS, UNK")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocab")
        return cls(tokens[3:])


def tokenize(text: str, vocab: Vocab | None = None) -> list:
    """Lowercase and split on whitespace.

    Returns token strings when ``vocab`` is None, otherwise ids with
    out-of-vocabulary tokens mapped to UNK.
    """
    toks = text.lower().split()
    if vocab is None:
        return toks
    return vocab.encode(toks)


@dataclass(eq=False)
class NgramModel:
    order: int
    vocab: Vocab
    lam: float
    # context tuple (length 0..order-1) -> {token id: count}
    counts: dict[tuple[int, ...], dict[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        self._tables: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
        for ctx, row in self.counts.items():
            ids = np.fromiter(sorted(row), dtype=np.int64, count=len(row))
            c = np.array([row[i] for i in ids], dtype=np.float64)
            total = c.sum()
            if total <= 0:
                raise ValueError(f"context {ctx} has no counts")
            self._tables[ctx] = (ids, c / total)
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _key(self, context: Sequence[int]) -> tuple[int, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        tail = tuple(context[-n:]) if len(context) else ()
        if len(tail) < n:
            tail = (BOS_ID,) * (n - len(tail)) + tail
        return tail

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        key = self._key(context)
        dist = self._cache.get(key)
        if dist is not None:
            return dist
        V = self.vocab_size
        p = np.full(V, 1.0 / V)
        for m in range(self.order):
            entry = self._tables.get(key[len(key) - m:] if m else ())
            if entry is None:
                # unseen context: defer entirely to the lower order
                continue
            ids, mle = entry
            p *= 1.0 - self.lam
            p[ids] += self.lam * mle
        p.setflags(write=False)
        self._cache[key] = p
        return p

    # persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "lambda": self.lam,
            "vocab": self.vocab.tokens,
            "counts": {
                " ".join(map(str, ctx)): {str(t): c for t, c in sorted(row.items())}
                for ctx, row in sorted(self.counts.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NgramModel":
        counts = {}
        for key, row in d["counts"].items():
            ctx = tuple(int(x) for x in key.split()) if key else ()
            counts[ctx] = {int(t): int(c) for t, c in row.items()}
        return cls(order=int(d["order"]), vocab=Vocab.from_list(d["vocab"]),
                   lam=float(d["lambda"]), counts=counts)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, NgramModel) and self.order == other.order
                and self.lam == other.lam and self.vocab == other.vocab
                and self.counts == other.counts)

    def __repr__(self) -> str:
        return f"NgramModel(order={self.order}, lam={self.lam}, |V|={self.vocab_size}, contexts={len(self.counts)})"


def train_ngram(corpus: Sequence[Sequence[int]], order: int, lam: float = 0.9,
                vocab: Vocab | None = None) -> NgramModel:
    """Count n-grams of every context length below ``order``.

    Each sequence gets ``order - 1`` BOS tokens prepended and EOS appended.
    Without an explicit ``vocab`` the ids are assumed to index a vocab built
    elsewhere, so passing one is the normal case.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    if len(corpus) == 0:
        raise ValueError("empty training corpus")
    if vocab is None:
        top = max((max(s) for s in corpus if len(s)), default=UNK_ID)
        vocab = Vocab(f"<{i}>" for i in range(3, top + 1))
    pad = order - 1
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for seq in corpus:
        padded = [BOS_ID] * pad + list(seq) + [EOS_ID]
        for i in range(pad, len(padded)):
            tok = padded[i]
            for m in range(order):
                counts[tuple(padded[i - m:i])][tok] += 1
    plain = {ctx: dict(row) for ctx, row in counts.items()}
    return NgramModel(order=order, vocab=vocab, lam=lam, counts=plain)


def next_distribution(model, context: Sequence[int]) -> np.ndarray:
    return model.next_distribution(context)


def greedy_token(dist: np.ndarray) -> int:
    # np.argmax returns the first maximal index, i.e. the lowest id on ties
    return int(np.argmax(dist))


def save_model(model: NgramModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True))


def load_model(path: str | Path) -> NgramModel:
    return NgramModel.from_dict(json.loads(Path(path).read_text()))
