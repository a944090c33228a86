"""Analytic speedup model for speculative decoding and its Monte Carlo check."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from taskspec.specdec import DecodeStats


@dataclass(frozen=True)
class SpeedupParams:
    alpha: float  # per-token draft/target agreement
    c: float  # draft step cost / target step cost
    gamma: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def in_domain(self) -> bool:
        """False when alpha == 1, where the closed form is singular."""
        return self.alpha < 1.0


@dataclass(frozen=True)
class SimResult:
    simulated_speedup: float
    mean_tokens_per_iteration: float
    iterations: int
    seed: int


@dataclass
class PassTimings:
    draft: Sequence[float] = field(default_factory=list)
    target: Sequence[float] = field(default_factory=list)

    @classmethod
    def from_stats(cls, stats: DecodeStats) -> "PassTimings":
        if stats.draft_passes == 0 or stats.target_passes == 0:
            return cls()
        return cls([stats.draft_time / stats.draft_passes],
                   [stats.target_time / stats.target_passes])


def expected_tokens_per_iteration(alpha: float, gamma: int) -> float:
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    return (1.0 - alpha ** (gamma + 1)) / (1.0 - alpha)


def theoretical_speedup(p: SpeedupParams) -> float:
    if not p.in_domain:
        raise ValueError("speedup formula is singular at alpha == 1")
    return expected_tokens_per_iteration(p.alpha, p.gamma) / (p.gamma * p.c + 1.0)


def optimal_gamma(alpha: float, c: float, gamma_max: int) -> int:
    """Grid argmax of the closed-form speedup over 0..gamma_max (smallest on ties)."""
    if gamma_max < 1:
        raise ValueError("gamma_max must be >= 1")
    best, best_val = 0, -np.inf
    for g in range(gamma_max + 1):
        val = theoretical_speedup(SpeedupParams(alpha, c, g))
        if val > best_val:
            best, best_val = g, val
    return best


def _accepted_runs(rng: np.random.Generator, alpha: float, gamma: int, n: int,
                   decay: float) -> np.ndarray:
    """Leading-success run length, capped at gamma, for n iterations."""
    if gamma == 0:
        return np.zeros(n, dtype=np.int64)
    if decay == 1.0:
        if alpha == 0.0:
            return np.zeros(n, dtype=np.int64)
        # failures-before-first-rejection ~ Geometric(1 - alpha) - 1
        runs = rng.geometric(1.0 - alpha, size=n) - 1
        return np.minimum(runs, gamma)
    probs = alpha * decay ** np.arange(gamma)
    ok = rng.random((n, gamma)) < probs
    # index of the first False, or gamma if all True
    first_fail = np.argmin(ok, axis=1)
    return np.where(ok.all(axis=1), gamma, first_fail)


def simulate_speculative(p: SpeedupParams, n_tokens: int = 100_000, seed: int = 0,
                         n_iterations: int | None = None, decay: float = 1.0,
                         chunk: int = 65_536) -> SimResult:
    """Monte Carlo of the draft/verify loop under Bernoulli acceptances.

    One iteration costs ``gamma * c + 1`` and yields (accepted run + 1)
    tokens; autoregressive decoding costs 1 per token.  Runs until
    ``n_tokens`` are produced, or for exactly ``n_iterations`` if given.
    ``decay`` != 1 uses the position-dependent schedule alpha * decay**i.
    """
    if n_iterations is None and n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    rng = np.random.default_rng(seed)
    tokens = 0
    iters = 0
    while True:
        if n_iterations is not None:
            n_now = min(chunk, n_iterations - iters)
            if n_now <= 0:
                break
            runs = _accepted_runs(rng, p.alpha, p.gamma, n_now, decay)
            tokens += int(runs.sum()) + n_now
            iters += n_now
        else:
            if tokens >= n_tokens:
                break
            runs = _accepted_runs(rng, p.alpha, p.gamma, chunk, decay) + 1
            cum = np.cumsum(runs)
            need = n_tokens - tokens
            stop = int(np.searchsorted(cum, need))  # first index with cum >= need
            if stop < len(runs):
                tokens += int(cum[stop])
                iters += stop + 1
                break
            tokens += int(cum[-1])
            iters += len(runs)
    time_spec = iters * (p.gamma * p.c + 1.0)
    return SimResult(simulated_speedup=tokens / time_spec,
                     mean_tokens_per_iteration=tokens / iters,
                     iterations=iters, seed=seed)


def estimate_params(stats: DecodeStats, timings: PassTimings, gamma: int) -> SpeedupParams:
    """Measured acceptance rate as alpha, mean draft/target pass time ratio as c."""
    if stats.drafted_tokens <= 0:
        raise ValueError("no drafted tokens to estimate alpha from")
    if len(timings.draft) == 0 or len(timings.target) == 0:
        raise ValueError("empty timing set")
    mean_target = float(np.mean(timings.target))
    if mean_target <= 0:
        raise ValueError("target pass time must be > 0")
    alpha = stats.accepted_tokens / stats.drafted_tokens
    params = SpeedupParams(alpha, float(np.mean(timings.draft)) / mean_target, gamma)
    if not params.in_domain:
        warnings.warn("alpha == 1: outside the domain of the closed-form speedup")
    return params
