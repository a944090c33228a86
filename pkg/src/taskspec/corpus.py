"""Synthetic multi-domain corpora sampled from random sparse n-gram generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from taskspec.lm import BOS, EOS, UNK
from taskspec.partition import PromptRecord, default_stopwords

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "kl", "pr", "st", "tr", "sh", "ch"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


@dataclass(frozen=True)
class CorpusSpec:
    k_domains: int = 4
    docs_per_domain: int = 1000
    vocab_per_domain: int = 50
    overlap_fraction: float = 0.1
    generator_order: int = 3
    seed: int = 0
    min_len: int = 24
    max_len: int = 40
    branching: int = 6  # successors per generator context
    mix: float = 0.6  # weight of the full-context table vs the last-word table

    def __post_init__(self):
        if self.k_domains < 1:
            raise ValueError("k_domains must be >= 1")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must lie in [0, 1]")
        if self.generator_order < 1:
            raise ValueError("generator_order must be >= 1")
        if self.docs_per_domain < 1 or not 1 <= self.min_len <= self.max_len:
            raise ValueError("invalid document counts or lengths")
        if self.vocab_per_domain < max(self.branching, self.generator_order + 1):
            raise ValueError(
                f"vocab_per_domain={self.vocab_per_domain} too small for order "
                f"{self.generator_order} with branching {self.branching}")


def make_words(n: int, rng: np.random.Generator, exclude: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(exclude)
    while len(words) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


class DomainGenerator:
    """Sparse random n-gram over one domain's words.

    p(x | ctx) = mix * T[ctx](x) + (1 - mix) * B[ctx[-1]](x), where every
    table puts Dirichlet weights on ``branching`` random successors.  Tables
    are derived lazily from (seed, domain, context), so they never need storing.
    """

    def __init__(self, domain: int, words: Sequence[str], order: int, seed: int,
                 branching: int, mix: float):
        self.domain = domain
        self.words = list(words)
        self.order = order
        self.seed = seed
        self.branching = branching
        self.mix = mix
        self._tables: dict[tuple, np.ndarray] = {}

    def _table(self, kind: int, ctx: tuple[int, ...]) -> np.ndarray:
        key = (kind,) + ctx
        t = self._tables.get(key)
        if t is None:
            rng = np.random.default_rng([self.seed, self.domain, kind, *(c + 1 for c in ctx)])
            succ = rng.choice(len(self.words), size=self.branching, replace=False)
            t = np.zeros(len(self.words))
            t[succ] = rng.dirichlet(np.ones(self.branching))
            self._tables[key] = t
        return t

    def distribution(self, history: Sequence[int]) -> np.ndarray:
        n = self.order - 1
        ctx = tuple(history[-n:]) if n else ()
        ctx = (-1,) * (n - len(ctx)) + ctx
        if n == 0:
            return self._table(0, ())
        full = self._table(1, ctx)
        if n == 1:
            return full
        return self.mix * full + (1.0 - self.mix) * self._table(0, ctx[-1:])

    def sample(self, length: int, rng: np.random.Generator) -> list[str]:
        hist: list[int] = []
        for _ in range(length):
            p = self.distribution(hist)
            hist.append(int(rng.choice(len(p), p=p)))
        return [self.words[i] for i in hist]


def shared_count(spec: CorpusSpec) -> int:
    return int(round(spec.overlap_fraction * spec.vocab_per_domain))


def domain_vocabularies(spec: CorpusSpec) -> list[list[str]]:
    """Per-domain word lists; the first ``shared_count`` words are common to all domains."""
    rng = np.random.default_rng([spec.seed, 7919])
    n_shared = shared_count(spec)
    n_own = spec.vocab_per_domain - n_shared
    reserved = set(default_stopwords()) | {BOS, EOS, UNK}
    pool = make_words(n_shared + spec.k_domains * n_own, rng, reserved)
    shared = pool[:n_shared]
    return [shared + pool[n_shared + d * n_own:n_shared + (d + 1) * n_own]
            for d in range(spec.k_domains)]


def gen_corpus(spec: CorpusSpec) -> tuple[list[PromptRecord], list[DomainGenerator]]:
    """Labeled documents, domain-major order, plus the generators that produced them."""
    vocabs = domain_vocabularies(spec)
    gens = [DomainGenerator(d, vocabs[d], spec.generator_order, spec.seed, spec.branching, spec.mix)
            for d in range(spec.k_domains)]
    records = []
    for d, gen in enumerate(gens):
        rng = np.random.default_rng([spec.seed, d, 31337])
        for _ in range(spec.docs_per_domain):
            length = int(rng.integers(spec.min_len, spec.max_len + 1))
            records.append(PromptRecord(" ".join(gen.sample(length, rng)), true_label=d))
    return records, gens
