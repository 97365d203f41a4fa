"""Collision graph construction, block statistics, action terms."""

import numpy as np
import pytest

from freshcert.cases import ledger_case, ledger_matrix, ledger_route_comparison
from freshcert.graph import action_terms, block_stats, build_graph
from freshcert.kernels import EqualityPatternKernel, gram_bundle, template_matrix
from freshcert.klr import solve_ideal
from freshcert.tasks import (Dataset, Sample, SubstitutionScheme, Template,
                             TemplateFamily, lit, sample_dataset, wc)


def family_with_literals():
    return TemplateFamily(
        templates=(Template((lit(0), wc(0), wc(1))),
                   Template((lit(1), wc(0), wc(1)))),
        labels=(1, -1), masses=(0.5, 0.5))


def make_dataset(fam, rows):
    samples = []
    for tpl, mapping in rows:
        t = fam.templates[tpl]
        samples.append(Sample(tpl, mapping, t.substitute(mapping),
                              fam.labels[tpl]))
    return Dataset(fam, tuple(samples))


def test_all_fresh_dataset_has_empty_graph():
    fam = family_with_literals()
    ds = make_dataset(fam, [(0, {0: 10, 1: 11}), (1, {0: 12, 1: 13}),
                            (0, {0: 14, 1: 15})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    assert graph.edge_count == 0
    assert graph.d2 == 0.0
    assert graph.test_edge_count == 0


def test_shared_wildcard_token_edge():
    fam = family_with_literals()
    ds = make_dataset(fam, [(0, {0: 10, 1: 11}), (1, {0: 12, 1: 11}),
                            (0, {0: 14, 1: 15})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    assert graph.support[0, 1] == 1   # shares token 11
    assert graph.support[0, 2] == 0
    assert graph.support[1, 2] == 0


def test_literal_hit_edge_even_with_disjoint_wildcards():
    fam = family_with_literals()
    # wildcard of a template-0 sample hits template 1's literal token 1
    ds = make_dataset(fam, [(0, {0: 1, 1: 11}), (1, {0: 12, 1: 13})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    assert graph.support[0, 1] == 1


def test_test_edges_literal_and_token():
    fam = family_with_literals()
    ds = make_dataset(fam, [(1, {0: 0, 1: 13}),    # hits test template literal 0
                            (1, {0: 100, 1: 14}),  # reuses a test token
                            (1, {0: 20, 1: 21})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    assert list(graph.test_edges) == [1, 1, 0]


def test_support_consistency_with_kernel():
    fam = family_with_literals()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    sch = SubstitutionScheme(train=tuple(range(2, 14)),
                             test=tuple(range(100, 120)))
    for seed in range(10):
        ds = sample_dataset(fam, sch, 30, seed=seed)
        graph = build_graph(ds, 0, {0: 100, 1: 101})
        bundle = gram_bundle(kernel, ds,
                             fam.templates[0].substitute({0: 100, 1: 101}), tmat)
        off = ~np.eye(30, dtype=bool)
        assert not np.any((bundle.delta != 0) & (graph.support == 0) & off)
        assert not np.any((bundle.zeta != 0) & (graph.test_edges == 0))


def test_color_pair_counts_and_degrees():
    fam = family_with_literals()
    ds = make_dataset(fam, [(0, {0: 10, 1: 11}), (1, {0: 10, 1: 13}),
                            (0, {0: 14, 1: 13}), (1, {0: 20, 1: 21})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    counts = graph.color_pair_edge_counts()
    assert counts[0, 1] == counts[1, 0]
    unordered_total = int(np.triu(graph.support, 1).sum())
    # diagonal holds unordered same-block counts; off-diagonal is ordered
    assert int(np.trace(counts)) + int(counts[0, 1]) == unordered_total
    assert np.array_equal(graph.degrees, graph.support.sum(axis=1))


def test_vocabulary_permutation_invariance():
    fam = family_with_literals()
    sch = SubstitutionScheme(train=tuple(range(2, 14)))
    ds = sample_dataset(fam, sch, 20, seed=2)
    graph = build_graph(ds, 0, {0: 50, 1: 51})
    rng = np.random.default_rng(0)
    # permutation fixing the literal ids and the test tokens
    movable = [t for t in range(60) if t not in (0, 1, 50, 51)]
    shuffled = rng.permutation(movable)
    perm = {t: t for t in (0, 1, 50, 51)}
    perm.update({a: int(b) for a, b in zip(movable, shuffled)})
    renamed = Dataset(fam, tuple(
        Sample(s.template_index, {k: perm[v] for k, v in s.mapping.items()},
               tuple(perm[t] for t in s.string), s.label) for s in ds.samples))
    graph2 = build_graph(renamed, 0, {0: 50, 1: 51})
    assert np.array_equal(graph.support, graph2.support)
    assert np.array_equal(graph.test_edges, graph2.test_edges)


def test_block_stats_basics():
    fam = family_with_literals()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    # one cross edge via a shared wildcard token
    ds = make_dataset(fam, [(0, {0: 10, 1: 11}), (0, {0: 12, 1: 13}),
                            (1, {0: 14, 1: 11}), (1, {0: 16, 1: 17})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    bundle = gram_bundle(kernel, ds,
                         fam.templates[0].substitute({0: 100, 1: 101}), tmat)
    stats = block_stats(graph, bundle)
    w = bundle.delta[0, 2]
    assert stats.delta_bar[0, 1] == pytest.approx(w / 4.0)
    assert stats.q_hat[0, 1] == pytest.approx(1.0 / 4.0)
    assert stats.q_hat[0, 0] == 0.0
    # same-block average keeps only diagonal entries when the graph is empty there
    assert abs(stats.delta_bar[0, 0]) <= tmat.delta_star / 2.0


def test_action_terms_zero_delta():
    fam = family_with_literals()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    ds = make_dataset(fam, [(0, {0: 10, 1: 11}), (1, {0: 12, 1: 13})])
    graph = build_graph(ds, 0, {0: 100, 1: 101})
    bundle = gram_bundle(kernel, ds,
                         fam.templates[0].substitute({0: 100, 1: 101}), tmat)
    ideal = solve_ideal(tmat.n, np.array([0.5, 0.5]), 0.3, np.array([1.0, -1.0]))
    action = action_terms(bundle, graph, ideal.theta[ds.colors],
                          ds.labels, 0.3)
    assert action.a_delta <= tmat.delta_star / 2.0 + 1e-12
    assert action.a_delta_realized <= action.a_delta + 1e-12


def test_gamma_crude_bound_and_row_bound():
    """gamma <= ||Delta||_op/(4 lam n); a_Delta <= row-degree bound; 50 cases."""
    rng = np.random.default_rng(9)
    fam = family_with_literals()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    sch = SubstitutionScheme(train=tuple(range(2, 12)))
    for seed in range(50):
        ds = sample_dataset(fam, sch, 16, seed=seed)
        graph = build_graph(ds, 0, {0: 100, 1: 101})
        bundle = gram_bundle(kernel, ds,
                             fam.templates[0].substitute({0: 100, 1: 101}), tmat)
        lam = float(10 ** rng.uniform(-1, 0))
        ideal = solve_ideal(tmat.n, ds.empirical_masses(), lam,
                            np.array([1.0, -1.0]))
        action = action_terms(bundle, graph, ideal.theta[ds.colors],
                              ds.labels, lam)
        n = 16
        crude = np.linalg.norm(bundle.delta, 2) / (4.0 * lam * n)
        assert action.gamma_cspec <= crude + 1e-9
        assert action.a_delta_realized <= tmat.delta_star / n \
            + tmat.l_star * graph.d2 / n ** 1.5 + 1e-12


def test_ledger_matrix_cancellation():
    r_mat, c_mat = ledger_matrix()
    assert np.allclose(r_mat.sum(axis=0), 0.0)
    assert np.allclose(r_mat.sum(axis=1), 0.0)
    assert r_mat.sum() == 0.0
    assert c_mat.sum() == 8  # support density 8/16
    expected = np.array([[0, 1, -1, 0], [1, 0, 0, -1],
                         [-1, 0, 0, 1], [0, -1, 1, 0]], dtype=float)
    assert np.array_equal(r_mat, expected)


def test_ledger_case_block_average_blind():
    case = ledger_case(copies=4)
    nb = case.sizes[0]
    cross = case.delta[:nb, nb:]
    assert abs(cross.mean()) == 0.0
    assert cross.astype(bool).mean() == pytest.approx(0.5)
    assert np.allclose(cross.sum(axis=0), 0.0)
    assert np.allclose(cross.sum(axis=1), 0.0)


def test_ledger_signed_route_beats_support_route():
    out = ledger_route_comparison(lam=0.1, copies=4)
    assert out["support_density"] == pytest.approx(0.5)
    assert out["mu_cross"] == 0.0
    assert out["anova_beats_bd"]
