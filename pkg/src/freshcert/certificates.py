"""The five margin-transfer budgets and their minimum certificate.

Routes: curvature-spectral (CS), degree-action (DEG), block-density
(BD), signed-moment / Hoeffding-decomposition (ANOVA), and the
literal-corrected bias-fluctuation path (BF).  Every budget bounds the
same score error |f_hat(x) - S_id(x)|; the report carries the minimum
and the selected route.

The confidence level enters through u = log((11 r^2 + 5 r)/delta).
Passing u = 0 evaluates every KL envelope at its base rate and every
Bernstein term at zero, which yields the realized (pathwise) form of
each budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import klbounds
from .graph import ActionTerms
from .kernels import KernelSpec, TemplateMatrix
from .klr import IdealScore, SolverConfig, solve_ideal
from .tasks import SubstitutionScheme, TemplateFamily

__all__ = [
    "ROUTES",
    "EnvelopeInputs",
    "SensitivityObjects",
    "AnovaComponents",
    "QuantilePolicy",
    "CorrectedTarget",
    "CertificateReport",
    "u_level",
    "u_level_multiclass",
    "kl_envelopes",
    "build_sensitivity",
    "block_density_slots",
    "anova_components",
    "anova_envelopes",
    "anova_slots",
    "corrected_target",
    "corrected_slots",
    "score_ord",
    "score_curv",
    "certify",
    "margin_transfer",
    "contrast_reduction",
]

ROUTES = ("CS", "DEG", "BD", "ANOVA", "BF")


def u_level(r: int, delta: float) -> float:
    """Union-bound level log((11 r^2 + 5 r)/delta)."""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0,1)")
    return math.log((11.0 * r * r + 5.0 * r) / delta)


def u_level_multiclass(r: int, n_classes: int, delta: float) -> float:
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0,1)")
    return math.log((n_classes - 1) * (11.0 * r * r + 5.0 * r) / delta)


# ---------------------------------------------------------------------------
# KL envelopes


@dataclass(frozen=True)
class EnvelopeInputs:
    e_bc: np.ndarray
    t_b: np.ndarray
    x_star: float
    level: float

    @property
    def e_star(self) -> float:
        return float(self.e_bc.max())

    def z_star(self, l_star: float) -> float:
        return l_star * self.x_star


def kl_envelopes(q: np.ndarray, q_test: np.ndarray, sizes: np.ndarray,
                 delta_star: float, l_star: float, u: float) -> EnvelopeInputs:
    """Block and test KL envelopes E_bc(u), T_b(u), X_star(u)."""
    q = np.asarray(q, dtype=float)
    q_test = np.asarray(q_test, dtype=float)
    sizes = np.asarray(sizes, dtype=int)
    r = len(sizes)
    if np.any(sizes < 1):
        raise ValueError("E_rep-violated: empty block")
    masses = sizes / sizes.sum()
    e_bc = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            n_eff = klbounds.effective_sample(b, c, int(sizes[b]), int(sizes[c]))
            if b != c:
                e_bc[b, c] = l_star * klbounds.kl_inverse(n_eff, q[b, c], u)
            else:
                nb = int(sizes[b])
                val = delta_star / nb
                if nb >= 2:
                    pairs = nb * (nb - 1) / 2.0
                    val += (2.0 * l_star * pairs / nb ** 2) * klbounds.kl_inverse(
                        n_eff, q[b, b], u)
                e_bc[b, b] = val
    t_b = np.array([l_star * klbounds.kl_inverse(int(sizes[b]), q_test[b], u)
                    for b in range(r)])
    x_star = float(sum(masses[b] * klbounds.kl_inverse(int(sizes[b]), q_test[b], u)
                       for b in range(r)))
    return EnvelopeInputs(e_bc, t_b, x_star, u)


# ---------------------------------------------------------------------------
# sensitivity objects


@dataclass(frozen=True)
class SensitivityObjects:
    a_mat: np.ndarray     # diag(phi''(theta)) + (1/lam) Y N Q Y
    r_a: np.ndarray       # Y A^{-1} Y n_a
    s_a: np.ndarray
    test_template: int


def _phi_second(theta: np.ndarray) -> np.ndarray:
    t = np.clip(theta, 1e-12, 1.0 - 1e-12)
    return 1.0 / (t * (1.0 - t))


def build_sensitivity(n_mat: np.ndarray, masses: np.ndarray, labels: np.ndarray,
                      theta: np.ndarray, lam: float, test_template: int,
                      test_row: np.ndarray | None = None) -> SensitivityObjects:
    y = np.asarray(labels, dtype=float)
    q = np.asarray(masses, dtype=float)
    yny = (y[:, None] * np.asarray(n_mat, dtype=float)) * y[None, :]
    a_mat = np.diag(_phi_second(np.asarray(theta))) + yny * q[None, :] / lam
    n_a = np.asarray(n_mat)[test_template] if test_row is None else np.asarray(test_row)
    r_a = y * np.linalg.solve(a_mat, y * n_a)
    return SensitivityObjects(a_mat, r_a, y * n_a, test_template)


def block_density_slots(sens: SensitivityObjects, beta: np.ndarray, masses: np.ndarray,
                        envelopes: EnvelopeInputs) -> tuple[float, float]:
    """Weighted block and test slots (D_bd, Z_bd)."""
    p = np.asarray(masses, dtype=float)
    w = np.abs(sens.r_a)
    b = np.abs(np.asarray(beta, dtype=float))
    d_slot = float((p * w) @ envelopes.e_bc @ (p * b))
    z_slot = float(np.sum(p * b * envelopes.t_b))
    return d_slot, z_slot


# ---------------------------------------------------------------------------
# signed-moment (Hoeffding) components


@dataclass(frozen=True)
class AnovaComponents:
    """Exact first/second moments of the kernel discrepancy per color pair.

    mu[b,c] is E K(sub(z_b,U), sub(z_c,V)) - N_bc over independent
    substitutions (same-block pairs use independent copies as well);
    sigma_fwd/sigma_rev are the first-projection variances; omega the
    canonical second moments; m_fwd/m_rev projection sup-norms.  nu,
    sigma_test, m_test are the test-column analogues for a fixed fresh
    test string.
    """
    mu: np.ndarray
    sigma_fwd: np.ndarray
    sigma_rev: np.ndarray
    omega: np.ndarray
    m_fwd: np.ndarray
    m_rev: np.ndarray
    nu: np.ndarray
    sigma_test: np.ndarray
    m_test: np.ndarray
    mode: str = "exact"
    mc_stderr: float = 0.0
    canonical_tables: dict = field(default_factory=dict, hash=False)

    @property
    def r(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class QuantilePolicy:
    """Canonical-term envelope Q^0: explicit constant shape or MC quantile."""
    kind: str = "explicit"     # "explicit" | "mc"
    c_q: float = 4.0
    mc_resamples: int = 2000
    seed: int = 0

    def value(self, comps: AnovaComponents, b: int, c: int, n_b: int, n_c: int,
              l_star: float, u: float) -> float:
        if self.kind == "mc":
            if u == 0.0:
                return 0.0  # confidence level 1 - e^{-0}: zero quantile
            table = comps.canonical_tables.get((b, c))
            if table is not None:
                return _mc_canonical_quantile(table, n_b, n_c, b == c, u,
                                              self.mc_resamples,
                                              self.seed + 977 * b + c)
        omega = math.sqrt(max(float(comps.omega[b, c]), 0.0))
        if b != c:
            return self.c_q * (omega / math.sqrt(n_b * n_c) * (u + 1.0)
                               + l_star / (n_b * n_c) * (u + 1.0) ** 2)
        return self.c_q * (omega / n_b * (u + 1.0) + l_star / n_b ** 2 * (u + 1.0) ** 2)


def _mc_canonical_quantile(table: dict, n_b: int, n_c: int, same_block: bool,
                           u: float, resamples: int, seed: int) -> float:
    """(1 - e^{-u}) quantile of resampled canonical block averages."""
    rng = np.random.default_rng(seed)
    values = np.asarray(table["values"], dtype=float)
    row_p = np.asarray(table["row_p"], dtype=float)
    col_p = np.asarray(table["col_p"], dtype=float)
    out = np.empty(resamples)
    for t in range(resamples):
        rows = rng.choice(len(row_p), size=n_b, p=row_p)
        if same_block:
            cols = rows
            sub = values[np.ix_(rows, cols)]
            if n_b < 2:
                out[t] = 0.0
                continue
            total = sub.sum() - np.trace(sub)
            out[t] = abs(total / (n_b * (n_b - 1)))
        else:
            cols = rng.choice(len(col_p), size=n_c, p=col_p)
            out[t] = abs(values[np.ix_(rows, cols)].mean())
    level = min(1.0 - math.exp(-u), 1.0)
    return float(np.quantile(out, level))


def _pattern_key(string: tuple[int, ...], anchor: frozenset[int]) -> tuple:
    """Canonical form keeping anchor tokens distinct: drives the type cache."""
    seen: dict[int, int] = {}
    out = []
    for tok in string:
        if tok in anchor:
            out.append(("a", tok))
        else:
            if tok not in seen:
                seen[tok] = len(seen)
            out.append(("w", seen[tok]))
    return tuple(out)


def anova_components(family: TemplateFamily, scheme: SubstitutionScheme,
                     kernel: KernelSpec, tmat: TemplateMatrix, test_template: int,
                     test_substitution: dict[int, int], mode: str = "auto",
                     mc_budget: int = 100_000, seed: int = 0,
                     enumeration_cap: int = 10**6, split: str = "train",
                     table_cap: int = 300) -> AnovaComponents:
    """Exact (or MC) moments of H_bc and the test column G_b,x.

    Exact mode enumerates injective maps per template; conditional means
    are cached by the string pattern relative to the literal anchor, so
    the double enumeration collapses to (#patterns) x (map count).
    """
    r = family.r
    anchor = frozenset(family.literal_set)
    test_tokens = frozenset(test_substitution.values())
    rng = np.random.default_rng(seed)
    # the pattern-class cache needs exchangeable tokens, which only the
    # uniform-injective policy guarantees
    exchangeable = not hasattr(scheme, "enumerate_weighted")

    enums: list[list[dict[int, int]] | None] = []
    for t in family.templates:
        enums.append(scheme.enumerate_maps(t, split, enumeration_cap))
    use_exact = all(e is not None for e in enums)
    if mode == "exact" and not use_exact:
        raise ValueError("enumeration cap exceeded; pass mode='mc' or 'auto'")
    if mode == "mc":
        use_exact = False

    def maps_for(b: int, budget: int) -> tuple[list[dict[int, int]], np.ndarray]:
        if use_exact:
            weighted = getattr(scheme, "enumerate_weighted", None)
            if weighted is not None and split != "test":
                rows = weighted(family.templates[b])
                return [m for m, _ in rows], np.array([w for _, w in rows])
            maps = enums[b]
            return maps, np.full(len(maps), 1.0 / len(maps))
        maps = [scheme.draw(family.templates[b], rng, split) for _ in range(budget)]
        return maps, np.full(len(maps), 1.0 / len(maps))

    per_side = max(200, int(math.sqrt(mc_budget)))
    strings: list[list[tuple[int, ...]]] = []
    atom_w: list[np.ndarray] = []
    for b in range(r):
        ms, wts = maps_for(b, per_side)
        strings.append([family.templates[b].substitute(m) for m in ms])
        atom_w.append(wts)

    mu = np.zeros((r, r))
    sig_f = np.zeros((r, r))
    sig_r = np.zeros((r, r))
    omega = np.zeros((r, r))
    m_f = np.zeros((r, r))
    m_r = np.zeros((r, r))
    tables: dict = {}

    def conditional_moments(xs: list[tuple[int, ...]], ys: list[tuple[int, ...]],
                            w_y: np.ndarray, n_ref: float) -> tuple[np.ndarray, np.ndarray]:
        """E_V[H | u] and E_V[H^2 | u] for every u-string, via the type cache."""
        cache: dict[tuple, tuple[float, float]] = {}
        m1 = np.empty(len(xs))
        m2 = np.empty(len(xs))
        for i, x in enumerate(xs):
            key = _pattern_key(x, anchor) if exchangeable else x
            hit = cache.get(key)
            if hit is None:
                vals = np.array([kernel(x, y) - n_ref for y in ys])
                hit = (float(vals @ w_y), float((vals ** 2) @ w_y))
                cache[key] = hit
            m1[i], m2[i] = hit
        return m1, m2

    for b in range(r):
        for c in range(r):
            if c < b:
                mu[b, c] = mu[c, b]
                sig_f[b, c] = sig_r[c, b]
                sig_r[b, c] = sig_f[c, b]
                omega[b, c] = omega[c, b]
                m_f[b, c] = m_r[c, b]
                m_r[b, c] = m_f[c, b]
                continue
            n_ref = tmat.n[b, c]
            w_b, w_c = atom_w[b], atom_w[c]
            m1_f, m2_f = conditional_moments(strings[b], strings[c], w_c, n_ref)
            mu_bc = float(m1_f @ w_b)
            h_f = m1_f - mu_bc
            sig_f[b, c] = float((h_f ** 2) @ w_b)
            m_f[b, c] = float(np.max(np.abs(h_f[w_b > 0]))) if len(h_f) else 0.0
            if b == c:
                sig_r[b, c] = sig_f[b, c]
                m_r[b, c] = m_f[b, c]
            else:
                m1_r, _ = conditional_moments(strings[c], strings[b], w_b, n_ref)
                nu_r = float(m1_r @ w_c)
                h_r = m1_r - nu_r
                sig_r[b, c] = float((h_r ** 2) @ w_c)
                m_r[b, c] = float(np.max(np.abs(h_r[w_c > 0]))) if len(h_r) else 0.0
            mu[b, c] = mu_bc
            second = float(m2_f @ w_b)
            omega[b, c] = max(second - mu_bc ** 2 - sig_f[b, c] - sig_r[b, c], 0.0)
            if len(strings[b]) <= table_cap and len(strings[c]) <= table_cap:
                vals = np.array([[kernel(x, y) - n_ref for y in strings[c]]
                                 for x in strings[b]])
                h_row = (vals @ w_c)[:, None] - mu_bc
                h_col = (w_b @ vals)[None, :] - mu_bc
                canon = vals - mu_bc - h_row - h_col
                tables[(b, c)] = {"values": canon, "row_p": w_b, "col_p": w_c}
                tables[(c, b)] = {"values": canon.T, "row_p": w_c, "col_p": w_b}

    test_string = family.templates[test_template].substitute(test_substitution)
    nu = np.zeros(r)
    sig_t = np.zeros(r)
    m_t = np.zeros(r)
    for b in range(r):
        vals = np.array([kernel(test_string, s) - tmat.n[test_template, b]
                         for s in strings[b]])
        nu[b] = float(vals @ atom_w[b])
        centered = vals - nu[b]
        sig_t[b] = float((centered ** 2) @ atom_w[b])
        m_t[b] = float(np.max(np.abs(centered[atom_w[b] > 0]))) if len(centered) else 0.0
    _ = test_tokens  # test structure is captured through the fixed string
    return AnovaComponents(mu, sig_f, sig_r, omega, m_f, m_r, nu, sig_t, m_t,
                           "exact" if use_exact else "mc",
                           0.0 if use_exact else 1.0 / math.sqrt(per_side),
                           tables)


def anova_envelopes(comps: AnovaComponents, sizes: np.ndarray, delta_star: float,
                    l_star: float, u: float,
                    policy: QuantilePolicy = QuantilePolicy(),
                    centered: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair block envelopes A_bc(u) and test envelopes T_b(u).

    centered=True drops the |mu| and |nu| terms (the corrected-target
    path, where the means live in the target) and swaps in delta_star
    of the corrected diagonal.
    """
    sizes = np.asarray(sizes, dtype=int)
    r = comps.r
    a_mat = np.zeros((r, r))
    for b in range(r):
        for c in range(r):
            n_b, n_c = int(sizes[b]), int(sizes[c])
            if b == c:
                if n_b == 1:
                    a_mat[b, b] = delta_star
                    continue
                val = delta_star / n_b
                if not centered:
                    val += abs(comps.mu[b, b])
                val += 2.0 * math.sqrt(2.0 * max(comps.sigma_fwd[b, b], 0.0) * u / n_b)
                val += 4.0 * comps.m_fwd[b, b] * u / (3.0 * n_b)
                val += policy.value(comps, b, b, n_b, n_b, l_star, u)
                a_mat[b, b] = val
            else:
                val = 0.0 if centered else abs(comps.mu[b, c])
                val += math.sqrt(2.0 * max(comps.sigma_fwd[b, c], 0.0) * u / n_b)
                val += 2.0 * comps.m_fwd[b, c] * u / (3.0 * n_b)
                val += math.sqrt(2.0 * max(comps.sigma_rev[b, c], 0.0) * u / n_c)
                val += 2.0 * comps.m_rev[b, c] * u / (3.0 * n_c)
                val += policy.value(comps, b, c, n_b, n_c, l_star, u)
                a_mat[b, c] = val
    t_vec = np.zeros(r)
    for b in range(r):
        n_b = int(sizes[b])
        val = 0.0 if centered else abs(comps.nu[b])
        val += math.sqrt(2.0 * max(comps.sigma_test[b], 0.0) * u / n_b)
        val += 2.0 * comps.m_test[b] * u / (3.0 * n_b)
        t_vec[b] = val
    return a_mat, t_vec


def anova_slots(a_mat: np.ndarray, t_vec: np.ndarray, sens: SensitivityObjects,
                beta: np.ndarray, masses: np.ndarray) -> tuple[float, float]:
    p = np.asarray(masses, dtype=float)
    w = np.abs(sens.r_a)
    b = np.abs(np.asarray(beta, dtype=float))
    return float((p * w) @ a_mat @ (p * b)), float(np.sum(p * b * t_vec))


# ---------------------------------------------------------------------------
# literal-corrected target


@dataclass(frozen=True)
class CorrectedTarget:
    n_corr: np.ndarray         # N° = N + mu
    m_corr: np.ndarray         # corrected test row m°_x (length r)
    mu_lit: np.ndarray
    nu_lit: np.ndarray
    delta_star_corr: float
    theta_corr: np.ndarray
    labels: np.ndarray
    lam: float
    bias: float                # deterministic corrected-to-fresh bias envelope

    @property
    def beta_corr(self) -> np.ndarray:
        return self.labels * self.theta_corr


def corrected_target(comps: AnovaComponents, tmat: TemplateMatrix,
                     masses: np.ndarray, labels: np.ndarray, lam: float,
                     q: np.ndarray, q_test: np.ndarray, test_template: int,
                     config: SolverConfig = SolverConfig()) -> CorrectedTarget:
    """Mean-feature Gram N°, corrected dual, and the bias envelope.

    A genuine mean-feature Gram is PSD by construction; synthetic
    discrepancy tables can push N + mu outside the cone, in which case
    the reference is floored to the nearest PSD matrix (the corrected
    path stays a valid block-constant PSD reference).
    """
    n_corr = 0.5 * ((tmat.n + comps.mu) + (tmat.n + comps.mu).T)
    eigs, evecs = np.linalg.eigh(n_corr)
    if eigs.min() < -1e-9 * max(1.0, float(np.trace(n_corr))):
        n_corr = (evecs * np.maximum(eigs, 0.0)) @ evecs.T
        eigs = np.maximum(eigs, 0.0)
    m_corr = tmat.n[test_template] + comps.nu
    delta_star_corr = float(np.max(np.abs(tmat.d - np.diag(n_corr))))
    y = np.asarray(labels, dtype=float)
    p = np.asarray(masses, dtype=float)
    ideal = solve_ideal(n_corr, p, lam, y, config)
    q_mat = np.asarray(q, dtype=float)
    mid = (np.sqrt(p)[:, None] * q_mat) * np.sqrt(p)[None, :]
    op_term = float(np.linalg.norm(mid, 2))
    test_term = math.sqrt(float(np.sum(p * np.asarray(q_test) ** 2)))
    bias = tmat.k_star * tmat.l_star / (4.0 * lam * lam) * op_term \
        + tmat.l_star / lam * test_term
    return CorrectedTarget(n_corr, m_corr, n_corr - tmat.n, comps.nu,
                           delta_star_corr, ideal.theta, y, lam, bias)


def corrected_slots(corr: CorrectedTarget, comps: AnovaComponents,
                    sizes: np.ndarray, l_star: float, u: float,
                    policy: QuantilePolicy = QuantilePolicy()) -> tuple[float, float]:
    """(D_bf, Z_bf): centered envelopes weighted by the corrected dual."""
    masses = np.asarray(sizes, dtype=float) / np.sum(sizes)
    a_mat, t_vec = anova_envelopes(comps, sizes, corr.delta_star_corr, l_star, u,
                                   policy, centered=True)
    sens = build_sensitivity(corr.n_corr, masses, corr.labels, corr.theta_corr,
                             corr.lam, 0, test_row=corr.m_corr)
    p = masses
    w = np.abs(sens.r_a)
    b = np.abs(corr.beta_corr)
    return float((p * w) @ a_mat @ (p * b)), float(np.sum(p * b * t_vec))


def corrected_action(delta: np.ndarray, colors: np.ndarray, corr: CorrectedTarget,
                     tmat: TemplateMatrix) -> float:
    """A_Delta° = ||Delta° (y*c°)||_2 / n^{3/2} on the realized sample."""
    colors = np.asarray(colors, dtype=int)
    n = len(colors)
    mu_sample = corr.mu_lit[np.ix_(colors, colors)]
    delta_corr = np.asarray(delta, dtype=float) - mu_sample
    np.fill_diagonal(delta_corr, tmat.d[colors] - np.diag(corr.n_corr)[colors])
    resid = corr.labels[colors] * corr.theta_corr[colors]
    return float(np.linalg.norm(delta_corr @ resid)) / n ** 1.5


# ---------------------------------------------------------------------------
# score functionals and the certificate


def score_ord(a: float, d: float, z: float, lam: float, k_star: float) -> float:
    if min(a, d, z) < 0:
        raise ValueError("score inputs must be nonnegative")
    return k_star * a / (4.0 * lam * lam) + d / (lam * lam) + z / lam


def score_curv(a: float, e: float, x: float, gamma: float, lam: float,
               k_star: float, l_star: float) -> float:
    if min(a, e, x) < 0:
        raise ValueError("score inputs must be nonnegative")
    if gamma >= 1.0:
        return math.inf
    lead = l_star * x / lam
    num = k_star * e + (k_star + 2.0 * l_star * math.sqrt(x)) * a
    return lead + num / (8.0 * lam * lam * (1.0 - gamma))


@dataclass(frozen=True)
class CertificateReport:
    budgets: dict
    b_sharp: float
    route: str
    level: float
    lam: float
    terms: dict
    b_rho: float
    e_rep: bool
    near_singular_curvature: bool = False

    def as_dict(self) -> dict:
        return {
            "budgets": {k: float(v) for k, v in self.budgets.items()},
            "b_sharp": float(self.b_sharp),
            "route": self.route,
            "u": float(self.level),
            "lambda": float(self.lam),
            "b_rho": float(self.b_rho),
            "e_rep": bool(self.e_rep),
            "near_singular_curvature": bool(self.near_singular_curvature),
            "terms": {k: (float(v) if np.isscalar(v) or isinstance(v, (int, float))
                          else np.asarray(v).tolist())
                      for k, v in self.terms.items()},
        }


def certify(action: ActionTerms, envelopes: EnvelopeInputs, sens: SensitivityObjects,
            ideal: IdealScore, tmat: TemplateMatrix, sizes: np.ndarray, lam: float,
            anova_env: tuple[np.ndarray, np.ndarray] | None = None,
            corrected: CorrectedTarget | None = None,
            corrected_env: tuple[float, float] | None = None,
            a_delta_corr: float | None = None,
            b_rho: float = math.nan, e_rep: bool = True,
            population_masses: np.ndarray | None = None,
            masses: np.ndarray | None = None) -> CertificateReport:
    """Evaluate the five budgets at the level baked into `envelopes`.

    Routes lacking inputs (no anova/corrected data) are reported as inf.
    The representation event: with population masses supplied, e_rep is
    p_hat >= p/2 per block; otherwise nonempty blocks.
    """
    sizes = np.asarray(sizes, dtype=int)
    p_hat = sizes / sizes.sum() if masses is None else np.asarray(masses, dtype=float)
    if population_masses is not None:
        e_rep = bool(np.all(p_hat >= np.asarray(population_masses) / 2.0))
    e_rep = e_rep and bool(np.all(sizes >= 1))
    u = envelopes.level
    k_star, l_star = tmat.k_star, tmat.l_star
    budgets: dict[str, float] = {}
    terms: dict = {
        "a_delta": action.a_delta,
        "a_delta_realized": action.a_delta_realized,
        "gamma_cspec": action.gamma_cspec,
        "e_star": envelopes.e_star,
        "x_star": envelopes.x_star,
        "k_star": k_star,
        "l_star": l_star,
    }
    if not e_rep:
        budgets = {r: math.inf for r in ROUTES}
        return CertificateReport(budgets, math.inf, "NONE", u, lam, terms, b_rho, False)

    budgets["CS"] = score_curv(action.a_delta, envelopes.e_star, envelopes.x_star,
                               action.gamma_cspec, lam, k_star, l_star)
    budgets["DEG"] = score_ord(action.a_delta, 0.0, envelopes.z_star(l_star), lam, k_star)
    d_bd, z_bd = block_density_slots(sens, ideal.beta, p_hat, envelopes)
    budgets["BD"] = score_ord(action.a_delta, d_bd, z_bd, lam, k_star)
    terms["d_bd"], terms["z_bd"] = d_bd, z_bd
    if anova_env is not None:
        d_an, z_an = anova_slots(anova_env[0], anova_env[1], sens, ideal.beta, p_hat)
        budgets["ANOVA"] = score_ord(action.a_delta, d_an, z_an, lam, k_star)
        terms["d_anova"], terms["z_anova"] = d_an, z_an
    else:
        budgets["ANOVA"] = math.inf
    if corrected is not None and corrected_env is not None and a_delta_corr is not None:
        d_bf, z_bf = corrected_env
        budgets["BF"] = score_ord(a_delta_corr, d_bf, z_bf, lam, k_star) + corrected.bias
        terms["d_bf"], terms["z_bf"] = d_bf, z_bf
        terms["a_delta_corr"] = a_delta_corr
        terms["b_bias"] = corrected.bias
    else:
        budgets["BF"] = math.inf
    b_sharp = min(budgets.values())
    route = next(r for r in ROUTES if budgets[r] == b_sharp)
    near = route == "CS" and 0.99 <= action.gamma_cspec < 1.0
    return CertificateReport(budgets, b_sharp, route, u, lam, terms, b_rho, True, near)


def margin_transfer(report: CertificateReport, ideal: IdealScore, epsilon: float,
                    s: float, n_mat: np.ndarray | None = None,
                    p_lower: float | None = None) -> dict:
    """Decision: does B_sharp <= s certify margin epsilon at this lambda?

    Also reports the ridge threshold check for Gamma = epsilon + s when the
    template matrix and a mass floor are supplied.
    """
    from .klr import lambda_threshold
    guaranteed = (report.b_sharp <= s
                  and ideal.margin > epsilon + s
                  and math.isfinite(report.b_sharp))
    out = {
        "guaranteed": bool(guaranteed),
        "ideal_margin": ideal.margin,
        "b_sharp": report.b_sharp,
        "epsilon": epsilon,
        "s": s,
    }
    if n_mat is not None and p_lower is not None:
        thresh = lambda_threshold(epsilon + s, p_lower, n_mat, ideal.labels)
        out["lambda_threshold"] = thresh
        out["lambda_ok"] = bool(report.lam < thresh)
    return out


def contrast_reduction(theta_rows: np.ndarray, class_labels: np.ndarray,
                       test_template: int, contrast_class: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Binary surrogate (labels, theta, lambda factor) for one softmax contrast.

    The contrast residual B v replaces the binary signed block residual
    2 y 8 theta; with lambda_eff = lambda/2 the two-class case reduces to
    the binary certificate exactly.
    """
    r, n_classes = theta_rows.shape
    labels = np.asarray(class_labels, dtype=int)
    e_y = np.zeros((r, n_classes))
    e_y[np.arange(r), labels] = 1.0
    v = np.zeros(n_classes)
    v[labels[test_template]] += 1.0
    v[contrast_class] -= 1.0
    bv = (e_y - theta_rows) @ v
    beta_tilde = bv / 2.0
    y_tilde = np.where(beta_tilde >= 0, 1.0, -1.0)
    theta_tilde = np.clip(np.abs(beta_tilde), 1e-12, 1.0 - 1e-12)
    return y_tilde, theta_tilde, 0.5
