"""Token-symmetric kernels, the template matrix N, and Gram bundles.

Every kernel here is evaluated through the canonical joint equality
pattern of a string pair, so two pairs related by a vocabulary
permutation get bit-identical values.  That makes the support fact
(fresh pair => zero Gram discrepancy) exact in floating point, which
downstream certificates rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tasks import Dataset, FamilyError, TemplateFamily, classify_string, fresh_pair, fresh_single

__all__ = [
    "joint_pattern",
    "KernelSpec",
    "EqualityPatternKernel",
    "TableKernel",
    "CachedPatternKernel",
    "TemplateMatrix",
    "GramBundle",
    "template_matrix",
    "check_token_symmetry",
    "gram_bundle",
]


def joint_pattern(x: tuple[int, ...], y: tuple[int, ...]) -> tuple[int, ...]:
    """Canonical form of the concatenated pair: first-occurrence relabeling."""
    seen: dict[int, int] = {}
    out = []
    for tok in tuple(x) + tuple(y):
        if tok not in seen:
            seen[tok] = len(seen)
        out.append(seen[tok])
    return tuple(out)


class KernelSpec:
    """Base class: symmetric PSD kernel over equal-length token strings."""

    token_symmetric: bool = True

    def __call__(self, x: tuple[int, ...], y: tuple[int, ...]) -> float:
        raise NotImplementedError

    def gram(self, strings: list[tuple[int, ...]]) -> np.ndarray:
        n = len(strings)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                v = self(strings[i], strings[j])
                out[i, j] = v
                out[j, i] = v
        return out

    def test_vector(self, strings: list[tuple[int, ...]], x: tuple[int, ...]) -> np.ndarray:
        return np.asarray([self(s, x) for s in strings])


class EqualityPatternKernel(KernelSpec):
    """Default equality-pattern kernel.

    K(x, y) = 1 + #{(p,q): x_p = y_q} + #{p<q: x_p = x_q and y_p = y_q},
    optionally scaled.  Each term is an explicit feature inner product
    (constant, bag of tokens, within-string equality indicators), so the
    kernel is PSD, and it depends only on the joint equality pattern.
    """

    def __init__(self, scale: float = 1.0):
        self.scale = scale

    def __call__(self, x, y):
        cross = sum(1 for a in x for b in y if a == b)
        k = len(x)
        pat = sum(1 for p in range(k) for q in range(p + 1, k)
                  if x[p] == x[q] and y[p] == y[q])
        return self.scale * (1.0 + cross + pat)

    def gram(self, strings):
        arr = np.asarray(strings)
        n, k = arr.shape
        cross = np.zeros((n, n))
        for p in range(k):
            for q in range(k):
                cross += arr[:, p][:, None] == arr[None, :, q]
        pat = np.zeros((n, n))
        for p in range(k):
            for q in range(p + 1, k):
                eq = arr[:, p] == arr[:, q]
                pat += np.logical_and(eq[:, None], eq[None, :])
        return self.scale * (1.0 + cross + pat)

    def test_vector(self, strings, x):
        arr = np.asarray(strings)
        xv = np.asarray(x)
        n, k = arr.shape
        cross = np.zeros(n)
        for p in range(k):
            for q in range(k):
                cross += arr[:, p] == xv[q]
        pat = np.zeros(n)
        for p in range(k):
            for q in range(p + 1, k):
                pat += np.logical_and(arr[:, p] == arr[:, q], xv[p] == xv[q])
        return self.scale * (1.0 + cross + pat)


class TableKernel(KernelSpec):
    """Kernel given by an explicit joint-pattern table."""

    def __init__(self, table: dict[tuple[int, ...], float],
                 default: float | None = None, token_symmetric: bool = True):
        self.table = dict(table)
        self.default = default
        self.token_symmetric = token_symmetric

    def __call__(self, x, y):
        key = joint_pattern(x, y)
        if key in self.table:
            return self.table[key]
        if self.default is not None:
            return self.default
        raise KeyError(f"pattern {key} missing from kernel table")


class CachedPatternKernel(KernelSpec):
    """Memoizes a (possibly stochastic) evaluator per joint equality pattern.

    Token symmetry makes the value well defined per pattern; caching makes
    repeated evaluations bit-identical, so fresh pairs of the same template
    pair always agree exactly even for Monte Carlo backed kernels.  The
    cache contract is write-once per key: duplicate computation is allowed,
    values agree by determinism of the seeded evaluator.
    """

    def __init__(self, evaluator: Callable[[tuple[int, ...], tuple[int, ...]], float]):
        self.evaluator = evaluator
        self.cache: dict[tuple[int, ...], float] = {}

    def __call__(self, x, y):
        # symmetric canonical key: the same value serves (x, y) and (y, x),
        # so kernel symmetry is exact even for stochastic evaluators
        key = min(joint_pattern(x, y), joint_pattern(y, x))
        hit = self.cache.get(key)
        if hit is None:
            k = len(x)
            hit = float(self.evaluator(key[:k], key[k:]))
            self.cache[key] = hit
        return hit


@dataclass(frozen=True)
class TemplateMatrix:
    """Fresh template kernel matrix and its derived constants."""
    n: np.ndarray
    d: np.ndarray
    delta_star: float
    k_star: float

    @property
    def l_star(self) -> float:
        return 2.0 * self.k_star

    @property
    def r(self) -> int:
        return self.n.shape[0]


def template_matrix(kernel: KernelSpec, family: TemplateFamily,
                    psd_tol: float = 1e-9) -> TemplateMatrix:
    """N_ab on canonical fresh pairs, self-kernels D_a, and the constants."""
    if not kernel.token_symmetric:
        raise FamilyError("kernel must be token-symmetric")
    r = family.r
    n = np.zeros((r, r))
    for a in range(r):
        for b in range(a, r):
            sa, sb = fresh_pair(family, a, b)
            xa = family.templates[a].substitute(sa)
            xb = family.templates[b].substitute(sb)
            v = kernel(xa, xb)
            n[a, b] = v
            n[b, a] = v
    d = np.zeros(r)
    for a in range(r):
        s = fresh_single(family, a)
        x = family.templates[a].substitute(s)
        d[a] = kernel(x, x)
    eigs = np.linalg.eigvalsh(n)
    if eigs.min() < -psd_tol * max(np.trace(n), 1.0):
        raise FamilyError(f"kernel-not-psd: template matrix eigenvalues {eigs}")
    if np.any(d - np.diag(n) < -1e-12):
        raise FamilyError("self-kernel below fresh-pair diagonal")
    delta_star = float(np.max(np.abs(d - np.diag(n))))
    k_star = float(max(d.max(), np.diag(n).max()))
    return TemplateMatrix(n, d, delta_star, k_star)


@dataclass
class SymmetryReport:
    passed: bool
    trials: int
    max_violation: float
    witness: tuple | None = None


def check_token_symmetry(kernel: KernelSpec, family: TemplateFamily,
                         trials: int = 100, seed: int = 0,
                         tol: float = 1e-9) -> SymmetryReport:
    """Random string pairs and vocabulary permutations; |K - K∘pi| <= tol."""
    rng = np.random.default_rng(seed)
    k = family.k
    lits = sorted(family.literal_set)
    vocab = list(range(max([10] + [t + 2 for t in lits]) + 2 * k))
    worst = 0.0
    witness = None
    for _ in range(trials):
        x = tuple(int(t) for t in rng.choice(vocab, size=k))
        y = tuple(int(t) for t in rng.choice(vocab, size=k))
        perm_ids = rng.permutation(len(vocab))
        perm = {vocab[i]: vocab[int(perm_ids[i])] for i in range(len(vocab))}
        px = tuple(perm[t] for t in x)
        py = tuple(perm[t] for t in y)
        gap = abs(kernel(x, y) - kernel(px, py))
        if gap > worst:
            worst = gap
            witness = (x, y, perm)
    return SymmetryReport(worst <= tol, trials, worst,
                          witness if worst > tol else None)


@dataclass(frozen=True)
class GramBundle:
    """Empirical Gram data next to its ideal block counterpart."""
    gram: np.ndarray          # K_hat, n x n
    k_test: np.ndarray        # k_x, length n
    m_block: np.ndarray       # M_n = P N P^T
    m_test: np.ndarray        # m_a
    delta: np.ndarray         # K_hat - M_n
    zeta: np.ndarray          # k_x - m_a
    membership: np.ndarray    # P, n x r
    colors: np.ndarray
    test_template: int
    tmat: TemplateMatrix
    labels: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def masses(self) -> np.ndarray:
        return self.membership.mean(axis=0)


def gram_bundle(kernel: KernelSpec, dataset: Dataset, test_string: tuple[int, ...],
                tmat: TemplateMatrix) -> GramBundle:
    """Assemble K_hat, k_x, M_n, m_a and the discrepancies Delta, zeta."""
    if len(dataset) == 0:
        raise FamilyError("dataset must be nonempty")
    family = dataset.family
    a = classify_string(family, test_string)
    if a is None:
        raise FamilyError("test-not-in-family")
    strings = [s.string for s in dataset.samples]
    gram = kernel.gram(strings)
    k_test = kernel.test_vector(strings, tuple(test_string))
    colors = dataset.colors
    p = np.zeros((len(dataset), family.r))
    p[np.arange(len(dataset)), colors] = 1.0
    m_block = tmat.n[np.ix_(colors, colors)]
    m_test = tmat.n[a, colors]
    return GramBundle(gram, k_test, m_block, m_test, gram - m_block,
                      k_test - m_test, p, colors, a, tmat, dataset.labels)
