"""Colored collision graph: support of the Gram discrepancy.

Edges are computed from the stored substitution maps, never inferred
from kernel values: a train-train pair collides when one image hits the
other template's literals or the two images intersect; a test edge
appears when a training image hits the test template's literals or the
test string's wildcard tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GramBundle
from .klr import curvature_matrix
from .tasks import Dataset

__all__ = [
    "CollisionGraph",
    "BlockStats",
    "ActionTerms",
    "build_graph",
    "support_matrices",
    "block_stats",
    "action_terms",
]


@dataclass(frozen=True)
class CollisionGraph:
    support: np.ndarray       # C, n x n 0/1, zero diagonal
    test_edges: np.ndarray    # C_0i, length n
    colors: np.ndarray
    r: int

    @property
    def n(self) -> int:
        return self.support.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.support.sum(axis=1)

    @property
    def d2(self) -> float:
        return float(np.sqrt((self.degrees.astype(float) ** 2).sum()))

    @property
    def d_max(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @property
    def edge_count(self) -> int:
        return int(self.support.sum()) // 2

    @property
    def test_edge_count(self) -> int:
        return int(self.test_edges.sum())

    def color_pair_edge_counts(self) -> np.ndarray:
        """Ordered color-pair counts; diagonal holds unordered within-block counts."""
        out = np.zeros((self.r, self.r), dtype=int)
        idx = np.nonzero(np.triu(self.support, k=1))
        for i, j in zip(*idx):
            b, c = self.colors[i], self.colors[j]
            if b == c:
                out[b, b] += 1
            else:
                out[b, c] += 1
                out[c, b] += 1
        return out

    def ordered_edge_density(self) -> float:
        return float(self.support.sum()) / (self.n ** 2)

    def wedge_density(self) -> float:
        """Ordered wedge count over n^3: paths j - i - k with j != k."""
        d = self.degrees.astype(float)
        return float((d * (d - 1.0)).sum()) / (self.n ** 3)


def support_matrices(dataset: Dataset, test_template: int,
                     test_substitution: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Def-style collision indicators from substitution images."""
    family = dataset.family
    n = len(dataset)
    w_max = max(1, family.w_max)
    images = np.full((n, w_max), -1, dtype=np.int64)
    for i, s in enumerate(dataset.samples):
        toks = sorted(s.image)
        images[i, :len(toks)] = toks
    colors = dataset.colors
    # lit_hit[i, c]: image of sample i intersects L_c
    lit_sets = [np.asarray(sorted(t.literals), dtype=np.int64) for t in family.templates]
    lit_hit = np.zeros((n, family.r), dtype=bool)
    for c, ls in enumerate(lit_sets):
        if ls.size:
            lit_hit[:, c] = np.isin(images, ls).any(axis=1)
    overlap = (images[:, None, :, None] == images[None, :, None, :])
    overlap &= (images[:, None, :, None] >= 0)
    pair_overlap = overlap.any(axis=(2, 3))
    support = lit_hit[:, colors].T | lit_hit[:, colors] | pair_overlap
    np.fill_diagonal(support, False)

    test_tokens = np.asarray(sorted(set(test_substitution.values())), dtype=np.int64)
    test_hit = np.zeros(n, dtype=bool)
    if test_tokens.size:
        test_hit = np.isin(images, test_tokens).any(axis=1)
    test_edges = lit_hit[:, test_template] | test_hit
    return support.astype(np.int8), test_edges.astype(np.int8)


def build_graph(dataset: Dataset, test_template: int,
                test_substitution: dict[int, int]) -> CollisionGraph:
    support, test_edges = support_matrices(dataset, test_template, test_substitution)
    return CollisionGraph(support, test_edges, dataset.colors, dataset.family.r)


@dataclass(frozen=True)
class BlockStats:
    """Color-pair block averages of Delta/zeta and empirical densities."""
    delta_bar: np.ndarray       # r x r mean of Delta over I_b x I_c (diagonal included)
    delta_bar_off: np.ndarray   # same-block ordered off-diagonal means on the diagonal
    zeta_bar: np.ndarray
    q_hat: np.ndarray           # ordered cross densities; unordered same-block on diagonal
    q_hat_test: np.ndarray
    sizes: np.ndarray

    @property
    def masses(self) -> np.ndarray:
        return self.sizes / self.sizes.sum()


def block_stats(graph: CollisionGraph, bundle: GramBundle) -> BlockStats:
    colors = graph.colors
    r = graph.r
    sizes = np.bincount(colors, minlength=r).astype(float)
    if np.any(sizes == 0):
        raise ValueError("E_rep-violated: empty template block")
    delta = bundle.delta
    zeta = bundle.zeta
    sup = graph.support.astype(float)
    delta_bar = np.zeros((r, r))
    delta_off = np.zeros(r)
    q_hat = np.zeros((r, r))
    for b in range(r):
        mb = colors == b
        for c in range(r):
            mc = colors == c
            blk = delta[np.ix_(mb, mc)]
            delta_bar[b, c] = blk.sum() / (sizes[b] * sizes[c])
            if b == c:
                nb = sizes[b]
                if nb >= 2:
                    off = blk.sum() - np.trace(blk)
                    delta_off[b] = off / (nb * (nb - 1.0))
                    q_hat[b, b] = sup[np.ix_(mb, mb)].sum() / (nb * (nb - 1.0))
            else:
                q_hat[b, c] = sup[np.ix_(mb, mc)].sum() / (sizes[b] * sizes[c])
    zeta_bar = np.zeros(r)
    q_test = np.zeros(r)
    for b in range(r):
        mb = colors == b
        zeta_bar[b] = zeta[mb].mean()
        q_test[b] = graph.test_edges[mb].mean()
    diag = np.diag(delta_bar).copy()
    delta_bar_off = delta_bar.copy()
    np.fill_diagonal(delta_bar_off, delta_off)
    # keep the diagonal-inclusive means on delta_bar itself
    np.fill_diagonal(delta_bar, diag)
    return BlockStats(delta_bar, delta_bar_off, zeta_bar, q_hat, q_test,
                      sizes.astype(int))


@dataclass(frozen=True)
class ActionTerms:
    a_delta_realized: float   # ||Delta (y*c_M)||_2 / n^{3/2}
    op_bound: float           # ||Delta||_op / n
    row_bound: float          # delta_*/n + L_* d_2 / n^{3/2}
    a_delta: float            # min of the two bounds
    gamma_cspec: float

    @property
    def near_singular(self) -> bool:
        return 0.99 <= self.gamma_cspec < 1.0


def action_terms(bundle: GramBundle, graph: CollisionGraph, c_block: np.ndarray,
                 labels: np.ndarray, lam: float) -> ActionTerms:
    """Train-train action size A_Delta and the curvature ratio gamma_cspec."""
    delta = bundle.delta
    n = bundle.n
    y = np.asarray(labels, dtype=float)
    realized = float(np.linalg.norm(delta @ (y * c_block))) / n ** 1.5
    op_bound = float(np.linalg.norm(delta, 2)) / n
    tmat = bundle.tmat
    row_bound = tmat.delta_star / n + tmat.l_star * graph.d2 / n ** 1.5
    a_delta = min(op_bound, row_bound)
    c_m = curvature_matrix(bundle.m_block, y, lam)
    evals, evecs = np.linalg.eigh(c_m)
    evals = np.maximum(evals, 4.0 / n - 1e-12)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    e_delta = (y[:, None] * delta * y[None, :]) / (lam * n * n)
    gamma = float(np.linalg.norm(inv_sqrt @ e_delta @ inv_sqrt, 2))
    return ActionTerms(realized, op_bound, row_bound, a_delta, gamma)
