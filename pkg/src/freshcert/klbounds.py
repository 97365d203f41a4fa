"""Bernoulli KL machinery: divergence, inverse envelopes, edge colorings.

The inverse envelope U_KL(N, q, u) is the smallest p in [q, 1] with
N * D_B(p||q) >= u, taken to be 1 when N == 0 or the feasible set is
empty.  Edge colorings (bipartite matchings, round robin) supply the
effective sample sizes that make dependent collision counts behave
like independent ones within each color class.
"""

from __future__ import annotations

import math

__all__ = [
    "bernoulli_kl",
    "kl_inverse",
    "kl_inverse_grid",
    "bernstein_relax",
    "bipartite_matchings",
    "round_robin",
    "effective_sample",
]


def bernoulli_kl(p: float, q: float) -> float:
    """D_B(p||q) with the 0*log0 = 0 convention; inf when q in {0,1}, p != q."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0,1], got {p}")
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0,1], got {q}")
    if q in (0.0, 1.0):
        return 0.0 if p == q else math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


def kl_inverse(n_eff: float, q: float, u: float) -> float:
    """Smallest p in [q,1] with n_eff * D_B(p||q) >= u; 1 if infeasible.

    Bisection to |n_eff*D_B - u| <= 1e-12*max(1,u) or width <= 1e-14.
    """
    if u < 0.0:
        raise ValueError("u must be nonnegative")
    if n_eff <= 0.0:
        return 1.0
    if u == 0.0:
        return min(max(q, 0.0), 1.0)
    if q >= 1.0:
        return 1.0
    if q <= 0.0:
        # D_B(p||0) = inf for p > 0, so every p > 0 is feasible.
        return 0.0
    if n_eff * bernoulli_kl(1.0, q) < u:
        return 1.0
    lo, hi = q, 1.0
    tol = 1e-12 * max(1.0, u)
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        val = n_eff * bernoulli_kl(mid, q)
        if abs(val - u) <= tol:
            return mid
        if val < u:
            lo = mid
        else:
            hi = mid
    return hi


def kl_inverse_grid(n_eff: float, q: float, u: float, steps: int = 10**6) -> float:
    """Grid-scan oracle for kl_inverse; slow, kept for testing."""
    if n_eff <= 0.0:
        return 1.0
    if u == 0.0:
        return min(max(q, 0.0), 1.0)
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    for i in range(steps + 1):
        p = q + (1.0 - q) * i / steps
        if n_eff * bernoulli_kl(p, q) >= u:
            return p
    return 1.0


def bernstein_relax(n_eff: float, q: float, u: float) -> float:
    """Closed-form relaxation q + sqrt(2q(1-q)u/N) + 2u/(3N), clipped to 1."""
    if n_eff <= 0.0:
        return 1.0
    val = q + math.sqrt(2.0 * q * (1.0 - q) * u / n_eff) + 2.0 * u / (3.0 * n_eff)
    return min(1.0, val)


def bipartite_matchings(n_b: int, n_c: int) -> list[list[tuple[int, int]]]:
    """Partition the edges of K_{n_b,n_c} into max(n_b,n_c) matchings."""
    if n_b < 1 or n_c < 1:
        raise ValueError("both sides must be nonempty")
    m = max(n_b, n_c)
    classes: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    for i in range(n_b):
        for j in range(n_c):
            classes[(i + j) % m].append((i, j))
    return classes


def round_robin(n: int) -> list[list[tuple[int, int]]]:
    """One-factorization of K_n: n-1 perfect matchings (n even) or n (n odd).

    Odd n uses the dummy-vertex construction; each class is a matching and
    every unordered pair appears exactly once.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return []
    odd = n % 2 == 1
    players = list(range(n)) + ([n] if odd else [])
    m = len(players)
    rounds: list[list[tuple[int, int]]] = []
    arr = players[:]
    for _ in range(m - 1):
        cls = []
        for i in range(m // 2):
            a, b = arr[i], arr[m - 1 - i]
            if a < n and b < n:
                cls.append((min(a, b), max(a, b)))
        rounds.append(cls)
        # rotate all but the first entry
        arr = [arr[0]] + [arr[-1]] + arr[1:-1]
    return rounds


def effective_sample(b: int, c: int, n_b: int, n_c: int) -> float:
    """Effective sample size for the (b,c) block collision count."""
    if b != c:
        return float(min(n_b, n_c))
    if n_b == 1:
        return 0.0
    m_n = n_b - 1 if n_b % 2 == 0 else n_b
    return (n_b * (n_b - 1) / 2.0) / m_n
