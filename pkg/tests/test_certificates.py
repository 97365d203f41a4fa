"""Budget envelopes, signed-moment components, corrected target, certify."""

import itertools
import math

import numpy as np
import pytest

from freshcert import certificates as cert
from freshcert.graph import action_terms, block_stats, build_graph
from freshcert.kernels import EqualityPatternKernel, TableKernel, gram_bundle, template_matrix
from freshcert.klr import primal_score, solve_dual, solve_ideal
from freshcert.pipeline import TaskPipeline
from freshcert.tasks import (SubstitutionScheme, Template, TemplateFamily, lit,
                             sample_dataset, wc)


def equality_family():
    return TemplateFamily(
        templates=(Template((wc(0), wc(0))), Template((wc(0), wc(1)))),
        labels=(1, -1), masses=(0.5, 0.5))


def literal_family():
    return TemplateFamily(
        templates=(Template((lit(0), wc(0), wc(1))),
                   Template((lit(1), wc(0), wc(1)))),
        labels=(1, -1), masses=(0.5, 0.5))


def scheme(m=12):
    return SubstitutionScheme(train=tuple(range(2, 2 + m)),
                              test=tuple(range(100, 130)))


def test_u_level():
    assert cert.u_level(2, 0.1) == pytest.approx(math.log((44 + 10) / 0.1))
    assert cert.u_level_multiclass(2, 3, 0.1) == pytest.approx(
        math.log(2 * 54 / 0.1))
    with pytest.raises(ValueError):
        cert.u_level(2, 0.0)


def test_kl_envelope_limits():
    q = np.array([[0.2, 0.1], [0.1, 0.05]])
    q_test = np.array([0.0, 0.0])
    sizes = np.array([6, 1])
    envs = cert.kl_envelopes(q, q_test, sizes, delta_star=0.5, l_star=2.0, u=0.0)
    # u -> 0: off-diagonal envelopes sit at L_* q
    assert envs.e_bc[0, 1] == pytest.approx(2.0 * 0.1)
    # n_b = 1 same-block: only the diagonal term survives
    assert envs.e_bc[1, 1] == pytest.approx(0.5)
    # zero test rates: X_star = 0 by the q = 0 convention
    assert envs.x_star == 0.0
    assert envs.z_star(2.0) == 0.0
    big = cert.kl_envelopes(q, q_test, sizes, 0.5, 2.0, u=5.0)
    assert np.all(big.e_bc >= envs.e_bc - 1e-12)


def test_score_functionals():
    assert cert.score_ord(0.0, 0.0, 0.0, 0.1, 1.0) == 0.0
    assert cert.score_curv(0.0, 0.0, 0.0, 0.0, 0.1, 1.0, 2.0) == 0.0
    assert cert.score_curv(1.0, 1.0, 1.0, 1.0, 0.1, 1.0, 2.0) == math.inf
    # DEG specialization: Ord(A, 0, Z)
    val = cert.score_ord(2.0, 0.0, 3.0, 0.5, 4.0)
    assert val == pytest.approx(4.0 * 2.0 / (4 * 0.25) + 3.0 / 0.5)


def test_sensitivity_row_mass_bound():
    """sum_b p_b |r_ab| <= K_*/4 and the squared form <= K_*^2/16."""
    rng = np.random.default_rng(0)
    for _ in range(25):
        r = int(rng.integers(2, 6))
        a_raw = rng.standard_normal((r, r))
        n_mat = a_raw @ a_raw.T / r + 0.3 * np.eye(r)
        k_star = float(np.diag(n_mat).max())
        masses = rng.dirichlet(np.ones(r))
        y = rng.choice([-1.0, 1.0], size=r)
        theta = rng.uniform(0.05, 0.95, size=r)
        lam = float(10 ** rng.uniform(-2, 0))
        sens = cert.build_sensitivity(n_mat, masses, y, theta, lam, 0)
        assert float(masses @ np.abs(sens.r_a)) <= k_star / 4.0 + 1e-9
        assert float(masses @ sens.r_a ** 2) <= k_star ** 2 / 16.0 + 1e-9


def test_block_density_slots_degenerate():
    n_mat = np.eye(2)
    sens = cert.build_sensitivity(n_mat, np.array([0.5, 0.5]),
                                  np.array([1.0, -1.0]),
                                  np.array([0.4, 0.4]), 0.5, 0)
    envs = cert.kl_envelopes(np.full((2, 2), 0.1), np.array([0.1, 0.1]),
                             np.array([4, 4]), 0.0, 2.0, 1.0)
    d0, z0 = cert.block_density_slots(sens, np.zeros(2), np.array([0.5, 0.5]),
                                      envs)
    assert d0 == 0.0 and z0 == 0.0
    d1, z1 = cert.block_density_slots(sens, np.array([0.3, -0.2]),
                                      np.array([0.5, 0.5]), envs)
    # weighted slots never exceed the max-envelope versions
    w_a = float(np.array([0.5, 0.5]) @ np.abs(sens.r_a))
    assert d1 <= w_a * envs.e_star * 0.5 + 1e-12
    assert z1 <= envs.t_b.max() + 1e-12


def brute_force_components(family, sch, kernel, tmat, test_template, test_sub):
    """Independent oracle: full double enumeration of injective maps."""
    r = family.r
    maps = [sch.enumerate_maps(t) for t in family.templates]
    strings = [[family.templates[b].substitute(m) for m in maps[b]]
               for b in range(r)]
    mu = np.zeros((r, r))
    sig_f = np.zeros((r, r))
    sig_r = np.zeros((r, r))
    omega = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            h = np.array([[kernel(x, y) - tmat.n[b, c] for y in strings[c]]
                          for x in strings[b]])
            mu[b, c] = h.mean()
            rows = h.mean(axis=1) - h.mean()
            cols = h.mean(axis=0) - h.mean()
            sig_f[b, c] = (rows ** 2).mean()
            sig_r[b, c] = (cols ** 2).mean()
            omega[b, c] = ((h - h.mean() - rows[:, None] - cols[None, :]) ** 2).mean()
    test_string = family.templates[test_template].substitute(test_sub)
    nu = np.zeros(r)
    sig_t = np.zeros(r)
    for b in range(r):
        g = np.array([kernel(test_string, s) - tmat.n[test_template, b]
                      for s in strings[b]])
        nu[b] = g.mean()
        sig_t[b] = ((g - g.mean()) ** 2).mean()
    return mu, sig_f, sig_r, omega, nu, sig_t


def test_anova_components_exact_vs_brute_force():
    fam = literal_family()
    sch = SubstitutionScheme(train=tuple(range(2, 8)),
                             test=tuple(range(100, 110)))  # 6-token alphabet
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    test_sub = {0: 100, 1: 101}
    comps = cert.anova_components(fam, sch, kernel, tmat, 0, test_sub,
                                  mode="exact")
    mu, sig_f, sig_r, omega, nu, sig_t = brute_force_components(
        fam, sch, kernel, tmat, 0, test_sub)
    assert np.allclose(comps.mu, mu, atol=1e-12)
    assert np.allclose(comps.sigma_fwd, sig_f, atol=1e-12)
    assert np.allclose(comps.sigma_rev, sig_r, atol=1e-12)
    assert np.allclose(comps.omega, omega, atol=1e-10)
    assert np.allclose(comps.nu, nu, atol=1e-12)
    assert np.allclose(comps.sigma_test, sig_t, atol=1e-12)


def test_anova_components_exact_vs_mc():
    fam = literal_family()
    sch = SubstitutionScheme(train=tuple(range(2, 8)),
                             test=tuple(range(100, 110)))
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    test_sub = {0: 100, 1: 101}
    exact = cert.anova_components(fam, sch, kernel, tmat, 0, test_sub, "exact")
    mc = cert.anova_components(fam, sch, kernel, tmat, 0, test_sub, "mc",
                               mc_budget=250_000, seed=1)
    side = 500  # sqrt(mc_budget)
    for b in range(2):
        for c in range(2):
            spread = tmat.l_star / math.sqrt(side)
            assert abs(exact.mu[b, c] - mc.mu[b, c]) <= 4 * spread
    assert np.allclose(exact.nu, mc.nu, atol=4 * tmat.l_star / math.sqrt(side))


def test_anova_zero_for_constant_kernel():
    fam = literal_family()
    sch = SubstitutionScheme(train=tuple(range(2, 8)))
    kernel = TableKernel({}, default=3.0)
    tmat = template_matrix(kernel, fam)
    comps = cert.anova_components(fam, sch, kernel, tmat, 0, {0: 2, 1: 3},
                                  mode="exact")
    assert np.allclose(comps.mu, 0.0)
    assert np.allclose(comps.omega, 0.0)
    assert np.allclose(comps.sigma_test, 0.0)


def test_anova_envelope_shapes():
    comps = cert.AnovaComponents(
        mu=np.array([[0.0, 0.2], [0.2, 0.1]]),
        sigma_fwd=np.zeros((2, 2)), sigma_rev=np.zeros((2, 2)),
        omega=np.zeros((2, 2)), m_fwd=np.zeros((2, 2)), m_rev=np.zeros((2, 2)),
        nu=np.array([0.05, 0.0]), sigma_test=np.zeros(2), m_test=np.zeros(2))
    policy = cert.QuantilePolicy(kind="explicit", c_q=4.0)
    a_mat, t_vec = cert.anova_envelopes(comps, np.array([4, 4]), 0.3, 2.0, 0.0,
                                        policy)
    q0_off = 4.0 * (0.0 + 2.0 / 16.0)
    assert a_mat[0, 1] == pytest.approx(0.2 + q0_off)
    assert t_vec[0] == pytest.approx(0.05)
    # n_b = 1 convention: the envelope collapses to delta_star
    a1, _ = cert.anova_envelopes(comps, np.array([1, 4]), 0.3, 2.0, 1.0, policy)
    assert a1[0, 0] == 0.3


def test_corrected_target_collision_free():
    # all-literal templates: no wildcards, no collisions, zero bias
    fam = TemplateFamily(
        templates=(Template((lit(0), lit(1))), Template((lit(2), lit(3)))),
        labels=(1, -1), masses=(0.5, 0.5))
    sch = SubstitutionScheme(train=tuple(range(10, 16)))
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    comps = cert.anova_components(fam, sch, kernel, tmat, 0, {}, mode="exact")
    corr = cert.corrected_target(comps, tmat, np.array([0.5, 0.5]),
                                 np.array([1.0, -1.0]), 0.5,
                                 np.zeros((2, 2)), np.zeros(2), 0)
    assert np.allclose(corr.n_corr, tmat.n)
    assert corr.bias == 0.0


def test_corrected_bias_envelope_operator_bound():
    """||N° - N||_op <= L_* ||Q_q||_op on random families."""
    rng = np.random.default_rng(5)
    fam = literal_family()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    for m in (6, 8, 10):
        sch = SubstitutionScheme(train=tuple(range(2, 2 + m)),
                                 test=tuple(range(100, 120)))
        from freshcert.tasks import collision_primitives
        test_sub = {0: 100, 1: 101}
        prims = collision_primitives(fam, sch, 0, test_sub)
        comps = cert.anova_components(fam, sch, kernel, tmat, 0, test_sub,
                                      mode="exact")
        gap = np.linalg.norm(comps.mu, 2)
        assert gap <= tmat.l_star * np.linalg.norm(prims.q, 2) + 1e-9


def test_bias_validity_deterministic():
    """|S° - S^id| <= B_bias on every sampled trial."""
    fam = literal_family()
    sch = scheme(m=8)
    kernel = EqualityPatternKernel()
    pipe = TaskPipeline(fam, sch, kernel, 0, {0: 100, 1: 101}, lam=0.3,
                        delta=0.2)
    for seed in range(10):
        ds = pipe.sample(seed, 24)
        sizes = ds.block_sizes()
        if np.any(sizes == 0):
            continue
        p_hat = sizes / 24
        corr = cert.corrected_target(pipe.comps, pipe.tmat, p_hat,
                                     fam.label_vector(), 0.3,
                                     pipe.primitives.q, pipe.primitives.q_test, 0)
        ideal = solve_ideal(pipe.tmat.n, p_hat, 0.3, fam.label_vector())
        ideal_corr = solve_ideal(corr.n_corr, p_hat, 0.3, fam.label_vector())
        s_corr = float(corr.m_corr @ (p_hat * fam.label_vector()
                                      * ideal_corr.theta)) / 0.3
        assert abs(s_corr - ideal.score(0)) <= corr.bias + 1e-10


def test_deterministic_projection_augmented_transfer():
    """|f_hat - S_id| <= Ord(A_Delta, Delta_w, Z_w) pathwise, every trial."""
    fam = equality_family()
    sch = SubstitutionScheme(train=tuple(range(10)),
                             test=tuple(range(100, 120)))
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    lam = 0.25
    test_sub = {0: 100}
    test_string = fam.templates[0].substitute(test_sub)
    for seed in range(30):
        ds = sample_dataset(fam, sch, 20, seed=seed)
        sizes = ds.block_sizes()
        if np.any(sizes == 0):
            continue
        n = len(ds)
        bundle = gram_bundle(kernel, ds, test_string, tmat)
        graph = build_graph(ds, 0, test_sub)
        y = ds.labels
        p_hat = sizes / n
        ideal = solve_ideal(tmat.n, p_hat, lam, fam.label_vector())
        sol = solve_dual(bundle.gram, y, lam)
        f_hat = primal_score(sol.c, y, bundle.k_test, lam, n)
        s_id = ideal.score(0)
        action = action_terms(bundle, graph, ideal.theta[ds.colors], y, lam)
        stats = block_stats(graph, bundle)
        sens = cert.build_sensitivity(tmat.n, p_hat, fam.label_vector(),
                                      ideal.theta, lam, 0)
        delta_w = float((p_hat * np.abs(sens.r_a)) @ np.abs(stats.delta_bar)
                        @ (p_hat * np.abs(ideal.beta)))
        z_w = float(np.sum(p_hat * np.abs(ideal.beta) * np.abs(stats.zeta_bar)))
        bound = cert.score_ord(action.a_delta, delta_w, z_w, lam, tmat.k_star)
        assert abs(f_hat - s_id) <= bound + 1e-9, seed


def test_certify_e_rep_violated():
    fam = equality_family()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    ideal = solve_ideal(tmat.n, np.array([0.5, 0.5]), 0.3, fam.label_vector())
    sens = cert.build_sensitivity(tmat.n, np.array([0.5, 0.5]),
                                  fam.label_vector(), ideal.theta, 0.3, 0)
    envs = cert.kl_envelopes(np.full((2, 2), 0.1), np.zeros(2),
                             np.array([7, 1]), tmat.delta_star, tmat.l_star, 1.0)
    from freshcert.graph import ActionTerms
    action = ActionTerms(0.0, 0.0, 0.0, 0.0, 0.0)
    report = cert.certify(action, envs, sens, ideal, tmat,
                          np.array([7, 1]), 0.3,
                          population_masses=np.array([0.5, 0.5]))
    assert report.b_sharp == math.inf
    assert not report.e_rep
    assert report.route == "NONE"


def test_margin_transfer_decisions():
    fam = equality_family()
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    ideal = solve_ideal(tmat.n, np.array([0.5, 0.5]), 0.01, fam.label_vector())
    fake = cert.CertificateReport({"DEG": 0.1}, 0.1, "DEG", 1.0, 0.01, {}, 0.1,
                                  True)
    out = cert.margin_transfer(fake, ideal, epsilon=0.5, s=0.5,
                               n_mat=tmat.n, p_lower=0.25)
    assert out["guaranteed"] == (ideal.margin > 1.0)
    bad = cert.CertificateReport({"DEG": math.inf}, math.inf, "NONE", 1.0,
                                 0.01, {}, 0.1, False)
    assert not cert.margin_transfer(bad, ideal, 0.0, 0.5)["guaranteed"]


def test_anova_envelope_coverage_light():
    """Realized block averages fall under the u-level envelopes empirically."""
    fam = equality_family()
    sch = SubstitutionScheme(train=tuple(range(12)),
                             test=tuple(range(100, 120)))
    kernel = EqualityPatternKernel()
    pipe = TaskPipeline(fam, sch, kernel, 0, {0: 100}, lam=0.3, delta=0.2)
    u = 2.0
    policy = cert.QuantilePolicy(kind="explicit", c_q=4.0)
    fails = 0
    trials = 300
    for seed in range(trials):
        ds = pipe.sample(seed, 24)
        sizes = ds.block_sizes()
        if np.any(sizes == 0):
            continue
        bundle = gram_bundle(kernel, ds, pipe.test_string, pipe.tmat)
        graph = build_graph(ds, 0, pipe.test_substitution)
        stats = block_stats(graph, bundle)
        a_env, t_env = cert.anova_envelopes(pipe.comps, sizes,
                                            pipe.tmat.delta_star,
                                            pipe.tmat.l_star, u, policy)
        if np.any(np.abs(stats.delta_bar) > a_env + 1e-12) or \
                np.any(np.abs(stats.zeta_bar) > t_env + 1e-12):
            fails += 1
    r = 2
    allowed = (5 * r * r + 2 * r) * math.exp(-u)
    sigma = math.sqrt(max(allowed * (1 - min(allowed, 1.0)), 1e-9) / trials)
    assert fails / trials <= min(1.0, allowed) + 3 * sigma


def test_anova_components_weighted_table_scheme():
    """Weighted-table moments against a direct weighted double sum."""
    from freshcert.tasks import TableSubstitutionScheme
    fam = TemplateFamily(
        templates=(Template((lit(0), wc(0))), Template((lit(1), wc(0)))),
        labels=(1, -1), masses=(0.5, 0.5))
    tables = [
        [({0: 5}, 0.7), ({0: 6}, 0.3)],
        [({0: 5}, 0.4), ({0: 7}, 0.6)],
    ]
    sch = TableSubstitutionScheme.build(fam, tables, test=(100, 101))
    kernel = EqualityPatternKernel()
    tmat = template_matrix(kernel, fam)
    comps = cert.anova_components(fam, sch, kernel, tmat, 0, {0: 100},
                                  mode="exact")
    # direct weighted double sum for the (0, 1) pair
    strings0 = [(0, 5), (0, 6)]
    strings1 = [(1, 5), (1, 7)]
    w0, w1 = np.array([0.7, 0.3]), np.array([0.4, 0.6])
    h = np.array([[kernel(x, y) - tmat.n[0, 1] for y in strings1]
                  for x in strings0])
    mu = float(w0 @ h @ w1)
    assert comps.mu[0, 1] == pytest.approx(mu, abs=1e-12)
    rows = h @ w1 - mu
    assert comps.sigma_fwd[0, 1] == pytest.approx(float((rows ** 2) @ w0),
                                                  abs=1e-12)
