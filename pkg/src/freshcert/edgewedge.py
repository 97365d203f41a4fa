"""Deterministic edge-wedge envelope dominating the realized certificate.

Edge densities, the wedge census with exact triple-degrees, anchored
collision second moments alpha, and the maximum-degree bound together
replace the random action terms A_Delta, A_Delta_corr, gamma by
explicit KL envelopes at level v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import klbounds
from .certificates import (CorrectedTarget, EnvelopeInputs, IdealScore,
                           SensitivityObjects, anova_slots, block_density_slots,
                           score_curv, score_ord)
from .kernels import TemplateMatrix
from .tasks import SubstitutionScheme, TemplateFamily

__all__ = [
    "WedgeCensus",
    "EdgeWedgeEnvelope",
    "v_level",
    "edge_density_envelope",
    "wedge_counts",
    "wedge_census",
    "wedge_alpha",
    "kappa_profile",
    "pi_collision",
    "envelope",
]


def v_level(r: int, eta: float) -> float:
    """v_eta = log((r^2 + r^3 + 1)/eta)."""
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0,1)")
    return math.log((r * r + r ** 3 + 1.0) / eta)


def edge_density_envelope(q: np.ndarray, sizes: np.ndarray, v: float) -> float:
    """Q_E(v): ordered edge-density envelope over color pairs."""
    sizes = np.asarray(sizes, dtype=int)
    n = sizes.sum()
    p_hat = sizes / n
    r = len(sizes)
    total = 0.0
    for b in range(r):
        for c in range(r):
            n_eff = klbounds.effective_sample(b, c, int(sizes[b]), int(sizes[c]))
            u_bc = klbounds.kl_inverse(n_eff, float(q[b, c]), v)
            if b != c:
                total += p_hat[b] * p_hat[c] * u_bc
            elif sizes[b] >= 2:
                total += p_hat[b] ** 2 * (1.0 - 1.0 / sizes[b]) * u_bc
    return total


def wedge_counts(sizes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Triple counts P_{b;cd} and exact max triple-degrees, all color triples."""
    sizes = np.asarray(sizes, dtype=int)
    r = len(sizes)
    counts = np.zeros((r, r, r), dtype=np.int64)
    degrees = np.zeros((r, r, r), dtype=np.int64)
    for b in range(r):
        for c in range(r):
            for d in range(r):
                nb, nc, nd = int(sizes[b]), int(sizes[c]), int(sizes[d])
                total = nb * nc * nd
                if b == c:
                    total -= nb * nd
                if b == d:
                    total -= nb * nc
                if c == d:
                    total -= nb * nc
                if b == c == d:
                    total += 2 * nb
                counts[b, c, d] = max(total, 0)
                best = 0
                for e in set((b, c, d)):
                    cnt = 0
                    if e == b:  # anchor role
                        cj = nc - (1 if b == c else 0)
                        ck = nd - (1 if b == d else 0)
                        cnt += cj * ck - ((cj if c == d else 0))
                    if e == c:  # first leaf
                        ci = nb - (1 if c == b else 0)
                        ck = nd - (1 if c == d else 0)
                        cnt += ci * ck - ((ci if b == d else 0))
                    if e == d:  # second leaf
                        ci = nb - (1 if d == b else 0)
                        cj = nc - (1 if d == c else 0)
                        cnt += ci * cj - ((ci if b == c else 0))
                    best = max(best, cnt)
                degrees[b, c, d] = best
    return counts, degrees


@dataclass(frozen=True)
class WedgeCensus:
    counts: np.ndarray       # P_{b;cd}
    max_degree: np.ndarray   # Delta^wedge
    alpha: np.ndarray        # anchored second moments
    alpha_bar: np.ndarray    # chosen envelopes in [alpha, 1]

    @property
    def effective(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.counts > 0,
                            self.counts / (3.0 * self.max_degree + 1.0), 0.0)

    def s_wedge(self, n: int, v: float) -> float:
        r = self.counts.shape[0]
        eff = self.effective
        total = 0.0
        for b in range(r):
            for c in range(r):
                for d in range(r):
                    if self.counts[b, c, d] > 0:
                        total += (self.counts[b, c, d] / n ** 3) * klbounds.kl_inverse(
                            float(eff[b, c, d]), float(self.alpha_bar[b, c, d]), v)
        return total


def pi_collision(family: TemplateFamily, scheme: SubstitutionScheme, b: int, c: int,
                 image: frozenset[int], split: str = "train") -> float:
    """pi_{b->c}(s): collision probability of a fixed b-substitution image
    against a fresh draw of template c under the scheme's policy."""
    lits_c = family.templates[c].literals
    if image & lits_c:
        return 1.0
    weighted = getattr(scheme, "enumerate_weighted", None)
    if weighted is not None and split != "test":
        lits_b = family.templates[b].literals
        total = 0.0
        for mv, wv in weighted(family.templates[c]):
            iv = set(mv.values())
            if iv & lits_b or iv & image:
                total += wv
        return total
    pool = scheme.admissible(family.templates[c], split)
    w_c = family.templates[c].n_wildcards
    if w_c == 0 or not pool:
        return 0.0
    target = set(family.templates[b].literals) | set(image)
    rel = len(set(pool) & target)
    m_c = len(pool)
    if m_c - rel < w_c:
        return 1.0
    return 1.0 - math.comb(m_c - rel, w_c) / math.comb(m_c, w_c)


def kappa_profile(family: TemplateFamily, scheme: SubstitutionScheme,
                  masses: np.ndarray, split: str = "train") -> dict:
    """Worst-case collision rates kappa_bc and the degree-bound inputs."""
    r = family.r
    kappa = np.zeros((r, r))
    weighted = getattr(scheme, "enumerate_weighted", None)
    if weighted is not None and split != "test":
        for b in range(r):
            images = [frozenset(m.values())
                      for m, w in weighted(family.templates[b]) if w > 0]
            for c in range(r):
                kappa[b, c] = max(pi_collision(family, scheme, b, c, img, split)
                                  for img in images)
    else:
        for b in range(r):
            pool_b = set(scheme.admissible(family.templates[b], split))
            w_b = family.templates[b].n_wildcards
            for c in range(r):
                lits_c = family.templates[c].literals
                if pool_b & lits_c and w_b > 0:
                    kappa[b, c] = 1.0
                    continue
                pool_c = set(scheme.admissible(family.templates[c], split))
                overlap = min(w_b, len(pool_b & pool_c))
                target = len(pool_c & family.templates[b].literals) + overlap
                m_c = len(pool_c)
                w_c = family.templates[c].n_wildcards
                if w_c == 0 or m_c == 0:
                    kappa[b, c] = 0.0
                elif m_c - target < w_c:
                    kappa[b, c] = 1.0
                else:
                    kappa[b, c] = 1.0 - math.comb(m_c - target, w_c) \
                        / math.comb(m_c, w_c)
    p_hat = np.asarray(masses, dtype=float)
    kappa_hat = kappa @ p_hat
    kappa_star = float(kappa_hat.max())
    return {"kappa": kappa, "kappa_hat": kappa_hat, "kappa_star": kappa_star}


def degree_envelope(kappa_star: float, n: int, v: float) -> float:
    """d_bar(v) = kappa_* + sqrt(2 kappa_* (v + log n)/n) + (v + log n)/(3n)."""
    t = v + math.log(n)
    return kappa_star + math.sqrt(2.0 * kappa_star * t / n) + t / (3.0 * n)


def wedge_alpha(family: TemplateFamily, scheme: SubstitutionScheme,
                mode: str = "auto", enumeration_cap: int = 10**6,
                mc_budget: int = 20_000, seed: int = 0,
                split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Anchored second moments alpha_{b;cd} and the default envelope alpha_bar.

    alpha is exact when the anchor template enumerates under the cap;
    otherwise alpha_bar falls back to the product bound kappa_bc kappa_bd.
    """
    r = family.r
    alpha = np.zeros((r, r, r))
    alpha_bar = np.ones((r, r, r))
    kappa = kappa_profile(family, scheme, np.full(r, 1.0 / r), split)["kappa"]
    rng = np.random.default_rng(seed)
    for b in range(r):
        maps = scheme.enumerate_maps(family.templates[b], split, enumeration_cap)
        if maps is None and mode == "exact":
            raise ValueError("enumeration cap exceeded for wedge alpha")
        if maps is None:
            maps = [scheme.draw(family.templates[b], rng, split)
                    for _ in range(mc_budget)]
            exact = False
        else:
            exact = True
        pis = np.zeros((len(maps), r))
        for i, m in enumerate(maps):
            img = frozenset(m.values())
            for c in range(r):
                pis[i, c] = pi_collision(family, scheme, b, c, img, split)
        for c in range(r):
            for d in range(r):
                val = float(np.mean(pis[:, c] * pis[:, d]))
                alpha[b, c, d] = val
                alpha_bar[b, c, d] = val if exact else min(
                    1.0, kappa[b, c] * kappa[b, d])
    return alpha, alpha_bar


@dataclass(frozen=True)
class EdgeWedgeEnvelope:
    q_e: float
    s_wedge: float
    a_ew: float
    a_op: float
    a_zero: float
    a_corr: float
    gamma_bar: float
    d_bar: float
    r2_mu: float
    budgets: dict
    b_ew: float
    route: str
    v: float

    def as_dict(self) -> dict:
        return {k: (v if isinstance(v, (dict, str)) else float(v))
                for k, v in self.__dict__.items()}


def envelope(q: np.ndarray, sizes: np.ndarray, census: WedgeCensus,
             kappa_star: float, tmat: TemplateMatrix, envelopes_u: EnvelopeInputs,
             sens: SensitivityObjects, ideal: IdealScore, lam: float, v: float,
             anova_env: tuple[np.ndarray, np.ndarray] | None = None,
             corrected: CorrectedTarget | None = None,
             corrected_env: tuple[float, float] | None = None,
             colors: np.ndarray | None = None) -> EdgeWedgeEnvelope:
    """All five enveloped budgets at wedge level v and block level u.

    The action slots of the realized budgets are replaced by A_0(v)
    (A_corr(v) on the corrected path) and gamma by A_op(v)/(4 lambda);
    the D/Z slots stay at the block level carried by `envelopes_u`.
    """
    sizes = np.asarray(sizes, dtype=int)
    n = int(sizes.sum())
    p_hat = sizes / n
    q_e = edge_density_envelope(q, sizes, v)
    s_w = census.s_wedge(n, v)
    k_star, l_star, d_star = tmat.k_star, tmat.l_star, tmat.delta_star
    a_ew = d_star / n + l_star * math.sqrt(q_e / n + s_w)
    d_bar = degree_envelope(kappa_star, n, v)
    a_op = d_star / n + l_star * d_bar
    a_zero = min(a_ew, a_op)
    gamma_bar = a_op / (4.0 * lam)

    budgets: dict[str, float] = {}
    budgets["CS"] = score_curv(a_zero, envelopes_u.e_star, envelopes_u.x_star,
                               gamma_bar, lam, k_star, l_star)
    budgets["DEG"] = score_ord(a_zero, 0.0, envelopes_u.z_star(l_star), lam, k_star)
    d_bd, z_bd = block_density_slots(sens, ideal.beta, p_hat, envelopes_u)
    budgets["BD"] = score_ord(a_zero, d_bd, z_bd, lam, k_star)
    if anova_env is not None:
        d_an, z_an = anova_slots(anova_env[0], anova_env[1], sens, ideal.beta, p_hat)
        budgets["ANOVA"] = score_ord(a_zero, d_an, z_an, lam, k_star)
    else:
        budgets["ANOVA"] = math.inf
    r2_mu = 0.0
    a_corr = math.inf
    if corrected is not None and corrected_env is not None:
        if colors is None:
            raise ValueError("corrected envelope needs the realized colors")
        colors = np.asarray(colors, dtype=int)
        mu_abs = np.abs(corrected.mu_lit)
        row = mu_abs[np.ix_(colors, colors)]
        np.fill_diagonal(row, 0.0)
        r_mu = row.sum(axis=1)
        r2_mu = float(np.linalg.norm(r_mu))
        a_corr = (corrected.delta_star_corr / n
                  + l_star * math.sqrt(q_e / n + s_w) + r2_mu / n ** 1.5)
        d_bf, z_bf = corrected_env
        budgets["BF"] = score_ord(a_corr, d_bf, z_bf, lam, k_star) + corrected.bias
    else:
        budgets["BF"] = math.inf
    b_ew = min(budgets.values())
    route = next(r for r in ("CS", "DEG", "BD", "ANOVA", "BF") if budgets[r] == b_ew)
    return EdgeWedgeEnvelope(q_e, s_w, a_ew, a_op, a_zero, a_corr, gamma_bar,
                             d_bar, r2_mu, budgets, b_ew, route, v)


def wedge_census(colors: np.ndarray, r: int, alpha: np.ndarray,
                 alpha_bar: np.ndarray) -> WedgeCensus:
    sizes = np.bincount(np.asarray(colors, dtype=int), minlength=r)
    counts, degrees = wedge_counts(sizes)
    return WedgeCensus(counts, degrees, alpha, alpha_bar)
