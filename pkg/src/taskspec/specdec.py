"""Draft/target speculative decoding with greedy and stochastic verification."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from taskspec.lm import EOS_ID, greedy_token

Mode = Literal["greedy", "stochastic"]


@dataclass
class DraftProposal:
    tokens: list[int]
    draft_dists: list[np.ndarray]

    def __post_init__(self):
        if len(self.tokens) != len(self.draft_dists):
            raise ValueError("tokens and draft_dists must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class VerificationResult:
    accepted_len: int
    emitted_token: int
    decisions: list[bool]


@dataclass
class DecodeStats:
    drafted_tokens: int = 0
    accepted_tokens: int = 0
    target_passes: int = 0
    draft_passes: int = 0
    output_tokens: int = 0
    wall_time: float = 0.0
    # seconds spent inside draft / target model calls
    draft_time: float = 0.0
    target_time: float = 0.0

    def __iadd__(self, other: "DecodeStats") -> "DecodeStats":
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


def _as_rng(rng) -> np.random.Generator:
    if rng is None or isinstance(rng, (int, np.integer, Sequence, np.random.SeedSequence)):
        return np.random.default_rng(rng)
    return rng  # Generator or a duck-typed stand-in


def target_distributions(model, contexts: Sequence[Sequence[int]]) -> list[np.ndarray]:
    """One logical target pass over several prefixes.

    Models that define ``batch_distributions`` (e.g. a latency-emulating
    wrapper) get a single call; plain n-grams are evaluated prefix by prefix.
    """
    batch = getattr(model, "batch_distributions", None)
    if batch is not None:
        return batch(contexts)
    return [model.next_distribution(c) for c in contexts]


def _pick(dist: np.ndarray, rng: np.random.Generator | None) -> int:
    if rng is None:
        return greedy_token(dist)
    return int(rng.choice(len(dist), p=dist))


def decode_autoregressive(model, prompt: Sequence[int], max_tokens: int,
                          rng_seed: int | None = None) -> tuple[list[int], DecodeStats]:
    """Plain one-token-per-pass decoding; greedy when ``rng_seed`` is None.

    The EOS token ends generation and is not part of the returned output.
    """
    if max_tokens < 0:
        raise ValueError("max_tokens must be >= 0")
    rng = None if rng_seed is None else np.random.default_rng(rng_seed)
    stats = DecodeStats()
    ctx = list(prompt)
    out: list[int] = []
    t0 = time.perf_counter()
    while len(out) < max_tokens:
        ts = time.perf_counter()
        (dist,) = target_distributions(model, [ctx])
        stats.target_time += time.perf_counter() - ts
        stats.target_passes += 1
        tok = _pick(dist, rng)
        if tok == EOS_ID:
            break
        out.append(tok)
        ctx.append(tok)
    stats.wall_time = time.perf_counter() - t0
    stats.output_tokens = len(out)
    return out, stats


def draft_propose(draft, context: Sequence[int], gamma: int, mode: Mode = "greedy",
                  rng=None, stats: DecodeStats | None = None) -> DraftProposal:
    """Draft up to ``gamma`` tokens, stopping early after an EOS."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    sample_rng = _as_rng(rng) if mode == "stochastic" else None
    ctx = list(context)
    tokens: list[int] = []
    dists: list[np.ndarray] = []
    ts = time.perf_counter()
    for _ in range(gamma):
        q = draft.next_distribution(ctx)
        tok = _pick(q, sample_rng)
        tokens.append(tok)
        dists.append(q)
        if tok == EOS_ID:
            break
        ctx.append(tok)
    if stats is not None:
        stats.draft_passes += len(tokens)
        stats.draft_time += time.perf_counter() - ts
    return DraftProposal(tokens, dists)


def _check_lengths(target_dists, proposal):
    if len(target_dists) != len(proposal) + 1:
        raise ValueError(
            f"need {len(proposal) + 1} target distributions, got {len(target_dists)}")


def verify_greedy(target_dists: Sequence[np.ndarray], proposal: DraftProposal) -> VerificationResult:
    _check_lengths(target_dists, proposal)
    decisions: list[bool] = []
    for i, tok in enumerate(proposal.tokens):
        ok = tok == greedy_token(target_dists[i])
        decisions.append(ok)
        if not ok:
            return VerificationResult(i, greedy_token(target_dists[i]), decisions)
    n = len(proposal)
    return VerificationResult(n, greedy_token(target_dists[n]), decisions)


def residual_distribution(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """normalize(max(0, p - q)), the resampling distribution after a rejection."""
    r = np.maximum(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64), 0.0)
    total = r.sum()
    if total <= 0.0:
        raise ValueError("residual undefined for identical distributions")
    return r / total


def acceptance_probability(p: np.ndarray, q: np.ndarray, token: int) -> float:
    if q[token] <= 0.0:
        raise ValueError(f"drafted token {token} has zero draft probability")
    return min(1.0, p[token] / q[token])


def verify_stochastic(target_dists: Sequence[np.ndarray], proposal: DraftProposal,
                      rng) -> VerificationResult:
    """Accept draft token x with probability min(1, p(x)/q(x)); resample on rejection."""
    _check_lengths(target_dists, proposal)
    rng = _as_rng(rng)
    decisions: list[bool] = []
    for i, tok in enumerate(proposal.tokens):
        p, q = target_dists[i], proposal.draft_dists[i]
        ratio = acceptance_probability(p, q, tok)
        u = rng.random()
        if u < ratio:
            decisions.append(True)
            continue
        decisions.append(False)
        resid = residual_distribution(p, q)
        return VerificationResult(i, int(rng.choice(len(resid), p=resid)), decisions)
    n = len(proposal)
    bonus = target_dists[n]
    return VerificationResult(n, int(rng.choice(len(bonus), p=bonus)), decisions)


def speculative_decode(target, draft, prompt: Sequence[int], gamma: int, max_tokens: int,
                       mode: Mode = "greedy", rng_seed: int | None = None,
                       trace: list | None = None) -> tuple[list[int], DecodeStats]:
    """Draft, verify in one (logical) target pass, append, repeat.

    Each iteration drafts ``min(gamma, remaining budget)`` tokens.  Output is
    cut at the first EOS (which is not returned) or at ``max_tokens``.  When
    ``trace`` is a list, one dict per iteration is appended to it.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if max_tokens < 0:
        raise ValueError("max_tokens must be >= 0")
    if mode not in ("greedy", "stochastic"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(rng_seed)
    stats = DecodeStats()
    ctx = list(prompt)
    out: list[int] = []
    done = False
    it = 0
    t0 = time.perf_counter()
    while not done and len(out) < max_tokens:
        remaining = max_tokens - len(out)
        proposal = draft_propose(draft, ctx, min(gamma, remaining), mode, rng, stats)
        prefixes = [ctx + proposal.tokens[:i] for i in range(len(proposal) + 1)]
        ts = time.perf_counter()
        tdists = target_distributions(target, prefixes)
        stats.target_time += time.perf_counter() - ts
        stats.target_passes += 1
        stats.drafted_tokens += len(proposal)
        if mode == "greedy":
            res = verify_greedy(tdists, proposal)
        else:
            res = verify_stochastic(tdists, proposal, rng)

        new = proposal.tokens[:res.accepted_len] + [res.emitted_token]
        kept_accepted = 0
        for j, tok in enumerate(new):
            if tok == EOS_ID:
                if j < res.accepted_len:
                    kept_accepted += 1
                done = True
                break
            if len(out) >= max_tokens:
                break
            out.append(tok)
            ctx.append(tok)
            if j < res.accepted_len:
                kept_accepted += 1
        stats.accepted_tokens += kept_accepted
        if trace is not None:
            trace.append({"iter": it, "drafted": list(proposal.tokens),
                          "accepted": res.accepted_len, "emitted": res.emitted_token,
                          "mode": mode})
        it += 1
    stats.wall_time = time.perf_counter() - t0
    stats.output_tokens = len(out)
    return out, stats


def compute_stats(stats: DecodeStats, include_bonus: bool = False) -> tuple[float, float, float]:
    """Return (acceptance rate, tau, tokens per second).

    ``tau`` counts accepted draft tokens per target pass; with
    ``include_bonus`` the emitted correction/bonus token is counted too.
    """
    if stats.drafted_tokens <= 0:
        raise ValueError("acceptance rate undefined: no drafted tokens")
    if stats.target_passes <= 0:
        raise ValueError("tau undefined: no target passes")
    rate = stats.accepted_tokens / stats.drafted_tokens
    accepted = stats.accepted_tokens + (stats.target_passes if include_bonus else 0)
    tau = accepted / stats.target_passes
    tps = stats.output_tokens / stats.wall_time if stats.wall_time > 0 else float("inf")
    return rate, tau, tps
