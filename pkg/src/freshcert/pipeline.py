"""End-to-end orchestration for sampled template tasks.

Distribution-level inputs (template matrix, collision primitives,
discrepancy moments, corrected target, worst-case collision rates) are
computed once per task; each trial then samples a dataset, builds the
Gram bundle and collision graph, solves the duals, and evaluates the
realized error, the five budgets, and the edge-wedge envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import certificates as cert
from . import edgewedge as ew
from .graph import action_terms, build_graph
from .kernels import GramBundle, KernelSpec, TemplateMatrix, gram_bundle, template_matrix
from .klr import (IdealScore, SoftmaxIdeal, SolverConfig, primal_score,
                  solve_dual, solve_ideal)
from .tasks import (CollisionPrimitives, Dataset, SubstitutionScheme,
                    TemplateFamily, collision_primitives, sample_dataset)

__all__ = ["TaskPipeline", "TrialResult", "certify_multiclass_contrasts"]


@dataclass
class TrialResult:
    seed: int
    realized_error: float
    report: cert.CertificateReport
    wedge_report: ew.EdgeWedgeEnvelope | None
    e_rep: bool
    d2_identity: tuple[float, float] | None
    support_violations: int
    ideal_margin: float
    f_hat: float
    s_ideal: float


class TaskPipeline:
    """Reusable per-task context for certificate evaluation and coverage."""

    def __init__(self, family: TemplateFamily, scheme: SubstitutionScheme,
                 kernel: KernelSpec, test_template: int,
                 test_substitution: dict[int, int], lam: float, delta: float,
                 anova_mode: str = "auto",
                 policy: cert.QuantilePolicy = cert.QuantilePolicy(),
                 config: SolverConfig = SolverConfig(), mc_budget: int = 100_000,
                 seed: int = 0, with_anova: bool = True, with_corrected: bool = True):
        self.family = family
        self.scheme = scheme
        self.kernel = kernel
        self.test_template = test_template
        self.test_substitution = dict(test_substitution)
        self.test_string = family.templates[test_template].substitute(test_substitution)
        self.lam = lam
        self.delta = delta
        self.policy = policy
        self.config = config
        self.tmat = template_matrix(kernel, family)
        self.u = cert.u_level(family.r, delta)
        self.primitives = collision_primitives(family, scheme, test_template,
                                               test_substitution)
        self.comps = None
        if with_anova:
            self.comps = cert.anova_components(
                family, scheme, kernel, self.tmat, test_template,
                test_substitution, mode=anova_mode, mc_budget=mc_budget, seed=seed)
        self.with_corrected = with_corrected and self.comps is not None
        kp = ew.kappa_profile(family, scheme, np.asarray(family.masses))
        self.kappa = kp["kappa"]
        self.alpha, self.alpha_bar = ew.wedge_alpha(family, scheme, seed=seed)

    # -- per-trial ----------------------------------------------------------

    def sample(self, seed: int, n: int) -> Dataset:
        return sample_dataset(self.family, self.scheme, n, seed)

    def evaluate(self, dataset: Dataset, eta: float | None = None,
                 check_support: bool = False) -> TrialResult:
        family = self.family
        lam = self.lam
        n = len(dataset)
        sizes = dataset.block_sizes()
        masses_pop = np.asarray(family.masses)
        e_rep = bool(np.all(sizes / n >= masses_pop / 2.0)) and bool(np.all(sizes >= 1))
        bundle = gram_bundle(self.kernel, dataset, self.test_string, self.tmat)
        graph = build_graph(dataset, self.test_template, self.test_substitution)
        y = dataset.labels
        sol = solve_dual(bundle.gram, y, lam, self.config, check_psd=False)
        f_hat = primal_score(sol.c, y, bundle.k_test, lam, n)
        if not e_rep:
            ideal = None
            s_ideal = math.nan
            report = cert.CertificateReport(
                {r: math.inf for r in cert.ROUTES}, math.inf, "NONE", self.u,
                lam, {}, self.b_rho(), False)
            return TrialResult(0, math.nan, report, None, False, None, 0,
                               math.nan, f_hat, s_ideal)
        p_hat = sizes / n
        ideal = solve_ideal(self.tmat.n, p_hat, lam, family.label_vector(), self.config)
        s_ideal = ideal.score(self.test_template)
        c_block = ideal.theta[dataset.colors]
        action = action_terms(bundle, graph, c_block, y, lam)
        envs = cert.kl_envelopes(self.primitives.q, self.primitives.q_test, sizes,
                                 self.tmat.delta_star, self.tmat.l_star, self.u)
        sens = cert.build_sensitivity(self.tmat.n, p_hat, family.label_vector(),
                                      ideal.theta, lam, self.test_template)
        anova_env = None
        corrected = None
        corr_env = None
        a_corr = None
        if self.comps is not None:
            anova_env = cert.anova_envelopes(self.comps, sizes, self.tmat.delta_star,
                                             self.tmat.l_star, self.u, self.policy)
            if self.with_corrected:
                corrected = cert.corrected_target(
                    self.comps, self.tmat, p_hat, family.label_vector(), lam,
                    self.primitives.q, self.primitives.q_test, self.test_template,
                    self.config)
                corr_env = cert.corrected_slots(corrected, self.comps, sizes,
                                                self.tmat.l_star, self.u, self.policy)
                a_corr = cert.corrected_action(bundle.delta, dataset.colors,
                                               corrected, self.tmat)
        report = cert.certify(action, envs, sens, ideal, self.tmat, sizes, lam,
                              anova_env=anova_env, corrected=corrected,
                              corrected_env=corr_env, a_delta_corr=a_corr,
                              b_rho=self.b_rho(), population_masses=masses_pop)
        wedge_rep = None
        d2_identity = None
        if eta is not None:
            v = ew.v_level(family.r, eta)
            census = ew.wedge_census(dataset.colors, family.r, self.alpha,
                                     self.alpha_bar)
            kappa_star = float((self.kappa @ p_hat).max())
            wedge_rep = ew.envelope(self.primitives.q, sizes, census, kappa_star,
                                    self.tmat, envs, sens, ideal, lam, v,
                                    anova_env=anova_env, corrected=corrected,
                                    corrected_env=corr_env, colors=dataset.colors)
            d2 = graph.d2
            q_e = graph.ordered_edge_density()
            s_e = graph.wedge_density()
            d2_identity = (d2 ** 2, n ** 2 * q_e + n ** 3 * s_e)
        violations = 0
        if check_support:
            off = ~np.eye(n, dtype=bool)
            violations += int(np.sum((bundle.delta != 0) & (graph.support == 0) & off))
            violations += int(np.sum((bundle.zeta != 0) & (graph.test_edges == 0)))
        return TrialResult(0, abs(f_hat - s_ideal), report, wedge_rep, e_rep,
                           d2_identity, violations, ideal.margin, f_hat, s_ideal)

    def run_trial(self, seed: int, n: int, eta: float | None = None,
                  check_support: bool = False) -> TrialResult:
        out = self.evaluate(self.sample(seed, n), eta, check_support)
        out.seed = seed
        return out

    def b_rho(self) -> float:
        return self.family.w_max / self.primitives.rho

    def coverage(self, trials: int, n: int, eta: float | None = None,
                 seed0: int = 0, progress: bool = False) -> dict:
        """Empirical validity frequencies for the transfer and envelope events."""
        hits = 0
        wedge_hits = 0
        valid = 0
        identity_fail = 0
        fired = 0
        sign_errors_fired = 0
        test_label = self.family.labels[self.test_template]
        margins = []
        for t in range(trials):
            res = self.run_trial(seed0 + t, n, eta)
            if not res.e_rep:
                # the certificate is vacuous (infinite) there: count as covered
                hits += 1
                wedge_hits += 1
                valid += 1
                continue
            valid += 1
            if res.realized_error <= res.report.b_sharp:
                hits += 1
            if eta is not None:
                if res.report.b_sharp <= res.wedge_report.b_ew + 1e-12:
                    wedge_hits += 1
                lhs, rhs = res.d2_identity
                if abs(lhs - rhs) > 1e-9 * max(1.0, lhs):
                    identity_fail += 1
            # transfer condition at epsilon = 0: certificate below the margin
            if math.isfinite(res.report.b_sharp) \
                    and res.report.b_sharp < res.ideal_margin:
                fired += 1
                if test_label * res.f_hat <= 0.0:
                    sign_errors_fired += 1
            margins.append(res.ideal_margin)
            if progress and (t + 1) % max(1, trials // 20) == 0:
                print(f"  {t + 1}/{trials} coverage={hits / (t + 1):.4f}")
        out = {
            "trials": trials,
            "coverage": hits / trials,
            "coverage_stderr": math.sqrt(max(hits / trials * (1 - hits / trials), 1e-12)
                                         / trials),
            "ideal_margin_mean": float(np.mean(margins)) if margins else math.nan,
            "transfer_fired": fired,
            "sign_errors_given_fired": sign_errors_fired,
        }
        if eta is not None:
            out["wedge_coverage"] = wedge_hits / trials
            out["d2_identity_failures"] = identity_fail
        return out


def certify_multiclass_contrasts(n_mat_bundle: GramBundle, graph, sm_ideal: SoftmaxIdeal,
                                 tmat: TemplateMatrix, primitives: CollisionPrimitives,
                                 sizes: np.ndarray, lam: float, delta: float,
                                 n_classes: int,
                                 comps: cert.AnovaComponents | None = None,
                                 policy: cert.QuantilePolicy = cert.QuantilePolicy(),
                                 config: SolverConfig = SolverConfig()) -> dict:
    """Per-contrast binary-reduction certificates for a softmax task.

    Each contrast (test class versus class l) maps to an equivalent
    binary problem with labels sign(Bv), block coordinates |Bv|/2, and
    ridge lam/2; for two classes the reduction is exact.
    """
    a = n_mat_bundle.test_template
    test_class = int(sm_ideal.class_labels[a])
    r = tmat.r
    sizes = np.asarray(sizes, dtype=int)
    n = int(sizes.sum())
    p_hat = sizes / n
    u = cert.u_level_multiclass(r, n_classes, delta)
    reports = {}
    for ell in range(n_classes):
        if ell == test_class:
            continue
        y_t, theta_t, factor = cert.contrast_reduction(
            sm_ideal.theta, sm_ideal.class_labels, a, ell)
        lam_eff = lam * factor
        ideal_eq = IdealScore(np.zeros(r), theta_t, p_hat, y_t, lam_eff, 0.0)
        colors = n_mat_bundle.colors
        y_samples = y_t[colors]
        c_block = theta_t[colors]
        action = action_terms(n_mat_bundle, graph, c_block, y_samples, lam_eff)
        envs = cert.kl_envelopes(primitives.q, primitives.q_test, sizes,
                                 tmat.delta_star, tmat.l_star, u)
        sens = cert.build_sensitivity(tmat.n, p_hat, y_t, theta_t, lam_eff, a)
        anova_env = None
        corrected = None
        corr_env = None
        a_corr = None
        if comps is not None:
            anova_env = cert.anova_envelopes(comps, sizes, tmat.delta_star,
                                             tmat.l_star, u, policy)
            corrected = cert.corrected_target(comps, tmat, p_hat, y_t, lam_eff,
                                              primitives.q, primitives.q_test, a,
                                              config)
            corr_env = cert.corrected_slots(corrected, comps, sizes, tmat.l_star,
                                            u, policy)
            a_corr = cert.corrected_action(n_mat_bundle.delta, colors, corrected,
                                           tmat)
        reports[ell] = cert.certify(action, envs, sens, ideal_eq, tmat, sizes,
                                    lam_eff, anova_env=anova_env,
                                    corrected=corrected, corrected_env=corr_env,
                                    a_delta_corr=a_corr)
    worst = max(rep.b_sharp for rep in reports.values())
    return {"contrasts": reports, "max_certificate": worst, "u": u}
