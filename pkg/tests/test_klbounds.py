"""KL machinery: divergence values, inverse envelopes, colorings."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freshcert import klbounds as kb


def refine_scan_inverse(n_eff, q, u, rounds=6, steps=1000):
    """Independent oracle: monotone grid scan with interval refinement."""
    if n_eff <= 0:
        return 1.0
    if q <= 0.0:
        return 0.0
    if q >= 1.0 or n_eff * kb.bernoulli_kl(1.0, q) < u:
        return 1.0
    lo, hi = q, 1.0
    for _ in range(rounds):
        grid = np.linspace(lo, hi, steps + 1)
        vals = np.array([n_eff * kb.bernoulli_kl(p, q) for p in grid])
        idx = int(np.argmax(vals >= u))
        lo = grid[max(idx - 1, 0)]
        hi = grid[idx]
    return hi


def test_kl_at_equal_rates_is_zero():
    for q in (0.01, 0.3, 0.5, 0.99):
        assert kb.bernoulli_kl(q, q) == 0.0


def test_kl_boundary_convention():
    assert kb.bernoulli_kl(1.0, 0.5) == pytest.approx(math.log(2.0), abs=1e-15)
    assert kb.bernoulli_kl(0.0, 0.5) == pytest.approx(math.log(2.0), abs=1e-15)
    assert kb.bernoulli_kl(0.5, 0.0) == math.inf
    assert kb.bernoulli_kl(0.0, 0.0) == 0.0


def test_kl_value_against_high_precision():
    import mpmath
    mpmath.mp.dps = 40
    p, q = mpmath.mpf("0.3"), mpmath.mpf("0.1")
    want = p * mpmath.log(p / q) + (1 - p) * mpmath.log((1 - p) / (1 - q))
    assert kb.bernoulli_kl(0.3, 0.1) == pytest.approx(float(want), rel=1e-14)
    # frozen from the 40-digit oracle above: 0.154 to 3 s.f.
    assert kb.bernoulli_kl(0.3, 0.1) == pytest.approx(0.153664, abs=5e-7)


def test_kl_inverse_conventions():
    assert kb.kl_inverse(0.0, 0.3, 1.0) == 1.0
    assert kb.kl_inverse(50.0, 0.3, 0.0) == 0.3
    # empty feasible set: even p = 1 cannot reach the level
    assert kb.kl_inverse(1.0, 0.9, 50.0) == 1.0
    # q = 0 convention: D_B(p||0) = inf for p > 0
    assert kb.kl_inverse(10.0, 0.0, 5.0) == 0.0


def test_kl_inverse_against_scan_oracle():
    val = kb.kl_inverse(100.0, 0.1, 1.0)
    oracle = refine_scan_inverse(100.0, 0.1, 1.0)
    assert val == pytest.approx(oracle, abs=1e-10)


def test_kl_inverse_scan_agreement_grid():
    rng = np.random.default_rng(0)
    count = 0
    for n_eff in (1.0, 3.0, 10.0, 40.0, 160.0, 512.0, 1000.0, 2500.0, 7.5, 77.0):
        for q in (1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99):
            for u in (0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 7.0, 12.0, 20.0, 40.0):
                got = kb.kl_inverse(n_eff, q, u)
                want = refine_scan_inverse(n_eff, q, u, steps=200)
                assert got == pytest.approx(want, abs=1e-10), (n_eff, q, u)
                count += 1
    assert count == 1000


def test_bernstein_dominates_kl_inverse():
    for n_eff in (1.0, 5.0, 25.0, 125.0, 625.0, 3000.0, 8.0, 64.0, 512.0, 10.0):
        for q in (1e-4, 1e-3, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99):
            for u in (0.01, 0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0):
                relax = kb.bernstein_relax(n_eff, q, u)
                exact = kb.kl_inverse(n_eff, q, u)
                assert relax >= exact - 1e-12, (n_eff, q, u)


def test_bernstein_limits():
    assert kb.bernstein_relax(30.0, 0.0, 3.0) == pytest.approx(2.0 / 30.0, rel=1e-12)
    assert kb.bernstein_relax(30.0, 0.2, 0.0) == pytest.approx(0.2, rel=1e-12)


@given(st.floats(1.0, 500.0), st.floats(0.01, 0.95), st.floats(0.01, 10.0))
@settings(max_examples=60, deadline=None)
def test_kl_inverse_monotone(n_eff, q, u):
    base = kb.kl_inverse(n_eff, q, u)
    assert base >= q - 1e-12
    assert kb.kl_inverse(n_eff, q, u * 1.5) >= base - 1e-12
    assert kb.kl_inverse(n_eff * 2.0, q, u) <= base + 1e-12


def _check_partition(classes, edges_expected):
    seen = set()
    for cls in classes:
        touched = set()
        for (a, b) in cls:
            assert a not in touched and b not in touched  # matching property
            touched.update((a, b))
            key = (min(a, b), max(a, b))
            assert key not in seen
            seen.add(key)
    assert seen == edges_expected


def test_bipartite_k23():
    classes = kb.bipartite_matchings(2, 3)
    assert len(classes) == 3
    assert sorted(len(c) for c in classes) == [2, 2, 2]
    _check_partition([[(a, b + 100) for a, b in cls] for cls in classes],
                     {(a, b + 100) for a in range(2) for b in range(3)})


def test_round_robin_even():
    classes = kb.round_robin(4)
    assert len(classes) == 3
    assert all(len(c) == 2 for c in classes)
    _check_partition(classes, {(a, b) for a in range(4) for b in range(a + 1, 4)})


def test_round_robin_odd():
    classes = kb.round_robin(5)
    assert len(classes) == 5
    assert sum(len(c) for c in classes) == 10
    _check_partition(classes, {(a, b) for a in range(5) for b in range(a + 1, 5)})


@pytest.mark.parametrize("n", list(range(2, 13)))
def test_round_robin_partition_all_small_n(n):
    classes = kb.round_robin(n)
    _check_partition(classes, {(a, b) for a in range(n) for b in range(a + 1, n)})


@pytest.mark.parametrize("nb,nc", [(1, 1), (2, 5), (4, 4), (7, 3)])
def test_bipartite_partition_small(nb, nc):
    classes = kb.bipartite_matchings(nb, nc)
    assert len(classes) == max(nb, nc)
    # bipartite sides are distinct vertex sets: offset the right side
    _check_partition([[(a, b + 1000) for a, b in cls] for cls in classes],
                     {(a, b + 1000) for a in range(nb) for b in range(nc)})


def test_effective_sample_cases():
    assert kb.effective_sample(0, 1, 10, 4) == 4.0
    assert kb.effective_sample(2, 2, 6, 6) == pytest.approx(15.0 / 5.0)
    assert kb.effective_sample(1, 1, 1, 1) == 0.0
    assert kb.effective_sample(0, 0, 7, 7) == pytest.approx(21.0 / 7.0)


def test_kl_tail_validity_monte_carlo():
    """P(mean > U_KL(N,q,u)) <= e^{-u} within 3 sigma, 1e5 trials."""
    rng = np.random.default_rng(42)
    trials = 100_000
    for (n, q, u) in [(40, 0.1, 1.0), (25, 0.3, 2.0), (60, 0.05, 0.5)]:
        bound = kb.kl_inverse(float(n), q, u)
        means = rng.binomial(n, q, size=trials) / n
        exceed = float(np.mean(means > bound + 1e-12))
        target = math.exp(-u)
        sigma = math.sqrt(target * (1 - target) / trials)
        assert exceed <= target + 3.0 * sigma, (n, q, u, exceed, target)
