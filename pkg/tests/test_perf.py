import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taskspec.perf import (PassTimings, SpeedupParams, estimate_params,
                           expected_tokens_per_iteration, optimal_gamma, simulate_speculative,
                           theoretical_speedup)
from taskspec.specdec import DecodeStats


def enumerated_tokens(alpha, gamma):
    """Sum over all 2^gamma accept/reject patterns; tokens = leading accepts + 1."""
    total = 0.0
    for pattern in itertools.product([True, False], repeat=gamma):
        prob = np.prod([alpha if ok else 1 - alpha for ok in pattern])
        lead = next((i for i, ok in enumerate(pattern) if not ok), gamma)
        total += prob * (lead + 1)
    return total


def test_speedup_examples():
    assert theoretical_speedup(SpeedupParams(0.8, 0.05, 5)) == pytest.approx(2.951424, abs=1e-9)
    assert theoretical_speedup(SpeedupParams(0.9, 0.05, 10)) == pytest.approx(4.5746, abs=1e-4)
    for a in (0.0, 0.3, 0.99):
        assert theoretical_speedup(SpeedupParams(a, 0.7, 0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        theoretical_speedup(SpeedupParams(1.0, 0.05, 3))


def test_params_validation():
    for bad in [(-0.1, 0.05, 1), (1.1, 0.05, 1), (0.5, 0.0, 1), (0.5, 0.05, -1)]:
        with pytest.raises(ValueError):
            SpeedupParams(*bad)
    assert not SpeedupParams(1.0, 0.1, 2).in_domain


def test_expected_tokens_examples():
    assert expected_tokens_per_iteration(0.0, 7) == 1.0
    assert expected_tokens_per_iteration(0.5, 1) == pytest.approx(0.5 * 1 + 0.5 * 2)
    assert expected_tokens_per_iteration(1 - 1e-9, 6) == pytest.approx(7.0, rel=1e-6)
    with pytest.raises(ValueError):
        expected_tokens_per_iteration(1.0, 3)


@pytest.mark.parametrize("alpha", [0.1, 0.45, 0.8, 0.95])
@pytest.mark.parametrize("gamma", [1, 2, 5, 8])
def test_expected_tokens_matches_enumeration(alpha, gamma):
    assert expected_tokens_per_iteration(alpha, gamma) == pytest.approx(
        enumerated_tokens(alpha, gamma), rel=1e-12)


def test_speedup_strictly_increasing_in_alpha():
    grid = np.linspace(0.0, 0.99, 100)
    for gamma in (1, 4, 10):
        vals = [theoretical_speedup(SpeedupParams(a, 0.1, gamma)) for a in grid]
        assert np.all(np.diff(vals) > 0)


def test_simulation_converges():
    res = simulate_speculative(SpeedupParams(0.8, 0.05, 5), n_tokens=100_000, seed=0)
    assert abs(res.simulated_speedup / 2.951424 - 1) < 0.02
    assert 1 <= res.mean_tokens_per_iteration <= 6
    res0 = simulate_speculative(SpeedupParams(0.0, 0.05, 5), n_tokens=10_000)
    assert res0.simulated_speedup == pytest.approx(0.8)


def test_simulation_deterministic():
    p = SpeedupParams(0.6, 0.1, 4)
    assert simulate_speculative(p, 5000, seed=9) == simulate_speculative(p, 5000, seed=9)


def test_simulation_decay_lowers_throughput():
    p = SpeedupParams(0.8, 0.05, 6)
    flat = simulate_speculative(p, n_iterations=200_000, seed=1)
    decayed = simulate_speculative(p, n_iterations=200_000, seed=1, decay=0.9)
    assert decayed.mean_tokens_per_iteration < flat.mean_tokens_per_iteration
    # the per-position path with decay 1 agrees with the geometric shortcut
    via_matrix = simulate_speculative(p, n_iterations=200_000, seed=1, decay=1.0 - 1e-15)
    assert via_matrix.mean_tokens_per_iteration == pytest.approx(
        expected_tokens_per_iteration(0.8, 6), rel=0.01)


def test_optimal_gamma():
    assert optimal_gamma(0.8, 1e-9, 12) == 12
    assert optimal_gamma(0.0, 0.05, 10) == 0
    vals = [theoretical_speedup(SpeedupParams(0.8, 0.05, g)) for g in range(21)]
    assert optimal_gamma(0.8, 0.05, 20) == int(np.argmax(vals))
    with pytest.raises(ValueError):
        optimal_gamma(0.5, 0.1, 0)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0, 0.98), c=st.floats(0.01, 1.0), gmax=st.integers(1, 15))
def test_optimal_gamma_is_grid_argmax(alpha, c, gmax):
    g = optimal_gamma(alpha, c, gmax)
    best = theoretical_speedup(SpeedupParams(alpha, c, g))
    for h in range(gmax + 1):
        val = theoretical_speedup(SpeedupParams(alpha, c, h))
        assert val <= best
        if h < g:
            assert val < best


def test_estimate_params():
    stats = DecodeStats(drafted_tokens=100, accepted_tokens=60)
    p = estimate_params(stats, PassTimings([0.001], [0.020]), gamma=4)
    assert (p.alpha, p.gamma) == (0.6, 4) and p.c == pytest.approx(0.05)
    with pytest.warns(UserWarning):
        p = estimate_params(DecodeStats(drafted_tokens=10, accepted_tokens=10),
                            PassTimings([1.0], [2.0]), gamma=2)
    assert not p.in_domain
    with pytest.raises(ValueError):
        estimate_params(stats, PassTimings([], []), gamma=2)
    with pytest.raises(ValueError):
        estimate_params(stats, PassTimings([0.1], [0.0]), gamma=2)


def test_pass_timings_from_stats():
    t = PassTimings.from_stats(DecodeStats(draft_passes=4, target_passes=2, draft_time=0.4,
                                           target_time=1.0))
    assert t.draft == [0.1] and t.target == [0.5]
    assert PassTimings.from_stats(DecodeStats()).draft == []
