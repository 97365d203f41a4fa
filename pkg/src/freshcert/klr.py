"""Kernel logistic regression through the entropy dual.

Binary: minimize (1/n) sum phi(c_i) + (1/(2 lambda n^2)) (y*c)' G (y*c)
over c in (0,1)^n, phi(c) = c log c + (1-c) log(1-c).  The fitted score
at a test vector k is (1/(lambda n)) k'(y*c).  The ideal template
problem is the r-dimensional primal Phi_{q,lambda}; on block-constant
Gram matrices the two coincide exactly.

Multiclass: row-simplex dual with the softmax entropy; solved as a
bordered KKT Newton system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SolverConfig",
    "DualSolution",
    "IdealScore",
    "SoftmaxDual",
    "solve_dual",
    "primal_score",
    "solve_ideal",
    "block_reduction_check",
    "lambda_threshold",
    "min_separating_norm",
    "solve_softmax_dual",
    "solve_softmax_ideal",
    "softmax_scores",
    "stability_bound",
    "curvature_error",
    "curvature_matrix",
    "template_identities",
]

EPS_BOUND = 1e-300  # coordinates live in (EPS_BOUND, 1 - EPS_BOUND)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iters: int = 200
    backtrack: float = 0.5

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class DualSolution:
    c: np.ndarray
    objective: float
    grad_norm: float
    iterations: int


@dataclass(frozen=True)
class IdealScore:
    g: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    labels: np.ndarray
    lam: float
    grad_norm: float

    @property
    def beta(self) -> np.ndarray:
        return self.labels * self.theta

    @property
    def margin(self) -> float:
        active = self.q > 0
        return float(np.min((self.labels * self.g)[active]))

    def score(self, template: int) -> float:
        return float(self.g[template])


def _phi(c: np.ndarray) -> np.ndarray:
    return c * np.log(c) + (1.0 - c) * np.log1p(-c)


def _check_psd(g: np.ndarray, tol: float = 1e-8) -> None:
    eigs = np.linalg.eigvalsh(0.5 * (g + g.T))
    floor = -tol * max(1.0, float(np.trace(g)))
    if eigs.min() < floor:
        raise ValueError(f"matrix not PSD within tolerance (min eig {eigs.min():.3e})")


def solve_dual(gram: np.ndarray, labels: np.ndarray, lam: float,
               config: SolverConfig = SolverConfig(), check_psd: bool = True) -> DualSolution:
    """Damped Newton on the entropy dual; unique interior minimizer."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    gram = np.asarray(gram, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = gram.shape[0]
    if gram.shape != (n, n) or y.shape != (n,):
        raise ValueError("dimension mismatch")
    if check_psd:
        _check_psd(gram)
    ygy = (y[:, None] * gram) * y[None, :]
    scale = 1.0 / (lam * n * n)

    def objective(c):
        return float(np.sum(_phi(c)) / n + 0.5 * scale * c @ (ygy @ c))

    def gradient(c):
        return (np.log(c) - np.log1p(-c)) / n + scale * (ygy @ c)

    c = np.full(n, 0.5)
    obj = objective(c)
    it = 0
    for it in range(1, config.max_iters + 1):
        grad = gradient(c)
        res = np.max(np.abs(grad))
        if res <= config.tol:
            break
        hess = ygy * scale
        hess = hess + np.diag(1.0 / (n * c * (1.0 - c)))
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        full = c + step
        if full.min() > EPS_BOUND and full.max() < 1.0 - 1e-16 \
                and np.max(np.abs(gradient(full))) < res:
            c = full
            obj = objective(c)
            continue
        alpha = 1.0
        decrement = grad @ step
        while alpha > 1e-18:
            cand = c + alpha * step
            if cand.min() > EPS_BOUND and cand.max() < 1.0 - 1e-16:
                cand_obj = objective(cand)
                if cand_obj <= obj + 1e-4 * alpha * decrement:
                    break
            alpha *= config.backtrack
        else:
            raise RuntimeError("line search failed")
        c = c + alpha * step
        obj = objective(c)
    grad_norm = float(np.max(np.abs(gradient(c))))
    if grad_norm > config.tol:
        raise RuntimeError(
            f"dual solver did not converge: residual {grad_norm:.3e} after {it} iterations")
    return DualSolution(c, obj, grad_norm, it)


def primal_score(c: np.ndarray, labels: np.ndarray, k_test: np.ndarray,
                 lam: float, n: int) -> float:
    """Fitted score (1/(lambda n)) k'(y * c)."""
    c = np.asarray(c, dtype=float)
    y = np.asarray(labels, dtype=float)
    k = np.asarray(k_test, dtype=float)
    if not (len(c) == len(y) == len(k) == n):
        raise ValueError("dimension mismatch")
    return float(k @ (y * c) / (lam * n))


def solve_ideal(n_mat: np.ndarray, q: np.ndarray, lam: float, labels: np.ndarray,
                config: SolverConfig = SolverConfig()) -> IdealScore:
    """Minimizer of the r-dimensional template objective Phi_{q,lambda}.

    Solved in the block-dual coordinates theta in (0,1)^r, minimizing
    sum_b q_b phi(theta_b) + (1/(2 lam)) (q*y*theta)' N (q*y*theta),
    which never inverts N and therefore tolerates singular PSD targets.
    The primal scores are g = N (q*y*theta)/lam and satisfy
    theta_b = 1/(1 + exp(y_b g_b)) on every nonempty block.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    n_mat = np.asarray(n_mat, dtype=float)
    q = np.asarray(q, dtype=float)
    y = np.asarray(labels, dtype=float)
    r = n_mat.shape[0]
    active = q > 0
    w = (q * y)[active]
    n_act = n_mat[np.ix_(active, active)]
    qa = q[active]
    coupling = (w[:, None] * n_act) * w[None, :] / lam

    def objective(t):
        return float(qa @ _phi(t) + 0.5 * t @ (coupling @ t))

    def gradient(t):
        return qa * (np.log(t) - np.log1p(-t)) + coupling @ t

    t = np.full(active.sum(), 0.5)
    obj = objective(t)
    for _ in range(config.max_iters):
        grad = gradient(t)
        res = np.max(np.abs(grad))
        if res <= config.tol:
            break
        hess = coupling + np.diag(qa / (t * (1.0 - t)))
        step = -np.linalg.solve(hess, grad)
        full = t + step
        if full.min() > EPS_BOUND and full.max() < 1.0 - 1e-16 \
                and np.max(np.abs(gradient(full))) < res:
            t = full
            obj = objective(t)
            continue
        alpha = 1.0
        while alpha > 1e-18:
            cand = t + alpha * step
            if cand.min() > EPS_BOUND and cand.max() < 1.0 - 1e-16:
                if objective(cand) <= obj + 1e-4 * alpha * (grad @ step):
                    break
            alpha *= config.backtrack
        else:
            raise RuntimeError("ideal line search failed")
        t = t + alpha * step
        obj = objective(t)
    grad_norm = float(np.max(np.abs(gradient(t))))
    if grad_norm > config.tol:
        raise RuntimeError(f"ideal solver did not converge: residual {grad_norm:.3e}")
    theta = np.full(r, 0.5)  # empty blocks: arbitrary, fixed at 1/2
    theta[active] = t
    g = n_mat @ (q * y * theta) / lam
    return IdealScore(g, theta, q, y, lam, grad_norm)


def block_reduction_check(n_mat: np.ndarray, colors: np.ndarray, lam: float,
                          labels_r: np.ndarray, test_template: int,
                          config: SolverConfig = SolverConfig()) -> dict:
    """Solve the block dual and the ideal problem; compare scores exactly.

    Returns both scores, their gap, and the block-constancy defect of the
    sample-level dual coordinates.
    """
    colors = np.asarray(colors, dtype=int)
    n = len(colors)
    r = n_mat.shape[0]
    sizes = np.bincount(colors, minlength=r)
    if np.any(sizes == 0):
        raise ValueError("E_rep-violated: all blocks must be nonempty")
    m_n = n_mat[np.ix_(colors, colors)]
    y_samples = np.asarray(labels_r, dtype=float)[colors]
    sol = solve_dual(m_n, y_samples, lam, config)
    m_test = n_mat[test_template, colors]
    sample_score = primal_score(sol.c, y_samples, m_test, lam, n)
    ideal = solve_ideal(n_mat, sizes / n, lam, np.asarray(labels_r, dtype=float), config)
    ideal_score = ideal.score(test_template)
    defect = 0.0
    for b in range(r):
        blk = sol.c[colors == b]
        if blk.size:
            defect = max(defect, float(blk.max() - blk.min()))
    return {
        "sample_score": sample_score,
        "ideal_score": ideal_score,
        "gap": abs(sample_score - ideal_score),
        "block_constancy_defect": defect,
        "theta": ideal.theta,
        "c": sol.c,
    }


def min_separating_norm(n_mat: np.ndarray, labels: np.ndarray) -> float:
    """R_*^2 = min g' N^{-1} g subject to y_a g_a >= 1.

    Substituting h = y * g gives min h' A h with A = (Y N Y)^{-1} over
    h >= 1; solved exactly by enumerating active sets for r <= 12, by
    projected gradient beyond that.
    """
    n_mat = np.asarray(n_mat, dtype=float)
    y = np.asarray(labels, dtype=float)
    r = n_mat.shape[0]
    a_mat = np.linalg.inv((y[:, None] * n_mat) * y[None, :])

    def quad(h):
        return float(h @ a_mat @ h)

    if r <= 12:
        best = quad(np.ones(r))  # all constraints active is always feasible
        for free_size in range(1, r + 1):
            for free in itertools.combinations(range(r), free_size):
                free = list(free)
                active = [i for i in range(r) if i not in free]
                aff = a_mat[np.ix_(free, free)]
                if active:
                    rhs = -a_mat[np.ix_(free, active)] @ np.ones(len(active))
                    try:
                        h_free = np.linalg.solve(aff, rhs)
                    except np.linalg.LinAlgError:
                        continue
                else:
                    h_free = np.zeros(free_size)  # unconstrained min is 0, infeasible
                h = np.ones(r)
                h[free] = h_free
                if np.all(h[free] >= 1.0 - 1e-12):
                    best = min(best, quad(h))
        return best
    # projected gradient fallback
    h = np.ones(r)
    lip = float(np.linalg.eigvalsh(a_mat).max())
    for _ in range(20000):
        h_new = np.maximum(1.0, h - (a_mat @ h) / lip)
        if np.max(np.abs(h_new - h)) < 1e-14:
            h = h_new
            break
        h = h_new
    return quad(h)


def _logistic_loss(u: float) -> float:
    return math.log1p(math.exp(-u)) if u > -30 else -u


def lambda_threshold(gamma: float, p_lower: float, n_mat: np.ndarray,
                     labels: np.ndarray) -> float:
    """Ridge threshold below which the ideal margin exceeds gamma.

    Uses the comparison-point construction: pick t on a power-of-two grid
    with loss(t) < p_lower * loss(gamma) / 2, then return
    2 (p_lower loss(gamma) - loss(t)) / (t^2 R_*^2).
    """
    if not (0.0 < p_lower <= 1.0):
        raise ValueError("p_lower must lie in (0, 1]")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    r_star_sq = min_separating_norm(n_mat, labels)
    assert r_star_sq > 0.0
    target = p_lower * _logistic_loss(gamma) / 2.0
    t = None
    for e in range(0, 41):
        cand = float(2 ** e)
        if cand > gamma and _logistic_loss(cand) < target:
            t = cand
            break
    if t is None:
        raise ValueError("no grid point achieves the loss target")
    return 2.0 * (p_lower * _logistic_loss(gamma) - _logistic_loss(t)) / (t * t * r_star_sq)


# ---------------------------------------------------------------------------
# multiclass softmax dual


@dataclass(frozen=True)
class SoftmaxDual:
    p: np.ndarray            # n x L, rows in the open simplex
    objective: float
    grad_norm: float
    iterations: int


def _softmax_kkt_newton(kernel_part: np.ndarray, weights: np.ndarray,
                        e_y: np.ndarray, lam_scale: float,
                        config: SolverConfig) -> tuple[np.ndarray, float, int]:
    """Newton on the stationarity system of a row-simplex entropy dual.

    Minimizes sum_i w_i psi(P_i.) + (lam_scale/2) tr((E-P)' K (E-P)) over
    row-stochastic P.  kernel_part is the n x n (or r x r) coupling matrix
    already carrying its weights; w_i are the entropy weights.
    """
    n, l_cls = e_y.shape
    p = np.full((n, l_cls), 1.0 / l_cls)
    mu = np.zeros(n)

    def residual(p, mu):
        kr = kernel_part @ (e_y - p)
        f1 = weights[:, None] * (np.log(p) + 1.0) - lam_scale * kr - mu[:, None]
        f2 = p.sum(axis=1) - 1.0
        return f1, f2

    def res_norm(f1, f2):
        return max(float(np.max(np.abs(f1))), float(np.max(np.abs(f2))))

    f1, f2 = residual(p, mu)
    it = 0
    for it in range(1, config.max_iters + 1):
        if res_norm(f1, f2) <= config.tol:
            break
        # block structure: for each class column, H = diag(w/p_col) + lam*K
        # with the simplex multiplier coupling columns; assemble dense.
        size = n * l_cls
        h = np.zeros((size + n, size + n))
        for ell in range(l_cls):
            sl = slice(ell * n, (ell + 1) * n)
            h[sl, sl] = lam_scale * kernel_part
            h[sl, sl] += np.diag(weights / p[:, ell])
            h[sl, size:] = -np.eye(n)
            h[size:, sl] = np.eye(n)
        rhs = np.concatenate([-f1.T.reshape(-1), -f2])
        try:
            sol = np.linalg.solve(h, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(h, rhs, rcond=None)[0]
        dp = sol[:size].reshape(l_cls, n).T
        dmu = sol[size:]
        alpha = 1.0
        base = res_norm(f1, f2)
        while alpha > 1e-18:
            cand = p + alpha * dp
            if cand.min() > EPS_BOUND:
                c1, c2 = residual(cand, mu + alpha * dmu)
                if res_norm(c1, c2) <= (1.0 - 1e-4 * alpha) * base:
                    break
            alpha *= config.backtrack
        else:
            raise RuntimeError("softmax line search failed")
        p = p + alpha * dp
        mu = mu + alpha * dmu
        f1, f2 = residual(p, mu)
    final = res_norm(f1, f2)
    if final > config.tol:
        raise RuntimeError(f"softmax dual did not converge: residual {final:.3e}")
    return p, final, it


def solve_softmax_dual(gram: np.ndarray, class_labels: np.ndarray, n_classes: int,
                       lam: float, config: SolverConfig = SolverConfig(),
                       check_psd: bool = True) -> SoftmaxDual:
    """Unique minimizer of the row-simplex softmax dual on a PSD Gram."""
    gram = np.asarray(gram, dtype=float)
    n = gram.shape[0]
    if check_psd:
        _check_psd(gram)
    labels = np.asarray(class_labels, dtype=int)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("class labels out of range")
    e_y = np.zeros((n, n_classes))
    e_y[np.arange(n), labels] = 1.0
    weights = np.full(n, 1.0 / n)
    lam_scale = 1.0 / (lam * n * n)
    p, res, it = _softmax_kkt_newton(gram, weights, e_y, lam_scale, config)
    r_mat = e_y - p
    obj = float(np.sum(weights * np.sum(p * np.log(p), axis=1))
                + 0.5 * lam_scale * np.trace(r_mat.T @ gram @ r_mat))
    return SoftmaxDual(p, obj, res, it)


@dataclass(frozen=True)
class SoftmaxIdeal:
    theta: np.ndarray       # r x L block coordinates
    g: np.ndarray           # r x L quotient score matrix
    q: np.ndarray
    class_labels: np.ndarray
    lam: float

    @property
    def b(self) -> np.ndarray:
        e_y = np.zeros_like(self.theta)
        e_y[np.arange(len(self.class_labels)), self.class_labels] = 1.0
        return e_y - self.theta

    def contrast_margin(self, template: int) -> float:
        row = self.g[template]
        own = self.class_labels[template]
        rest = np.delete(row, own)
        return float(row[own] - rest.max())


def solve_softmax_ideal(n_mat: np.ndarray, q: np.ndarray, class_labels: np.ndarray,
                        n_classes: int, lam: float,
                        config: SolverConfig = SolverConfig()) -> SoftmaxIdeal:
    """Block version: Theta solving the r x L quotient softmax problem."""
    n_mat = np.asarray(n_mat, dtype=float)
    q = np.asarray(q, dtype=float)
    labels = np.asarray(class_labels, dtype=int)
    r = n_mat.shape[0]
    e_y = np.zeros((r, n_classes))
    e_y[np.arange(r), labels] = 1.0
    # entropy weights q_a; coupling Q N Q at scale 1/lambda
    qdiag = np.diag(q)
    coupling = qdiag @ n_mat @ qdiag
    theta, _, _ = _softmax_kkt_newton(coupling, q, e_y, 1.0 / lam, config)
    g = n_mat @ qdiag @ (e_y - theta) / lam
    return SoftmaxIdeal(theta, g, q, labels, lam)


def softmax_scores(p: np.ndarray, class_labels: np.ndarray, k_test: np.ndarray,
                   lam: float, n: int) -> np.ndarray:
    """Score vector (1/(lambda n)) R(P)' k_x."""
    labels = np.asarray(class_labels, dtype=int)
    e_y = np.zeros_like(p)
    e_y[np.arange(len(labels)), labels] = 1.0
    return (e_y - p).T @ np.asarray(k_test, dtype=float) / (lam * n)


# ---------------------------------------------------------------------------
# deterministic perturbation bounds


def stability_bound(g: np.ndarray, m: np.ndarray, k: np.ndarray, mvec: np.ndarray,
                    lam: float, kappa_sq: float) -> float:
    """Strong-convexity stability: kappa^2 ||G-M||_op/(4 lam^2 n) + ||k-m||_2/(lam sqrt n)."""
    n = g.shape[0]
    op = float(np.linalg.norm(g - m, 2))
    return kappa_sq * op / (4.0 * lam * lam * n) + float(
        np.linalg.norm(np.asarray(k) - np.asarray(mvec))) / (lam * math.sqrt(n))


def curvature_matrix(m: np.ndarray, labels: np.ndarray, lam: float) -> np.ndarray:
    """C_M = (4/n) I + (1/(lam n^2)) Y M Y."""
    n = m.shape[0]
    y = np.asarray(labels, dtype=float)
    return (4.0 / n) * np.eye(n) + (y[:, None] * m * y[None, :]) / (lam * n * n)


def curvature_error(g: np.ndarray, m: np.ndarray, k: np.ndarray, mvec: np.ndarray,
                    lam: float, labels: np.ndarray, c_m: np.ndarray | None = None) -> dict:
    """Curvature-spectral perturbation components and the final bound.

    Returns gamma, the two ellipsoid terms, the direct test term, and the
    total; total is inf when gamma >= 1.
    """
    g = np.asarray(g, dtype=float)
    m = np.asarray(m, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = g.shape[0]
    delta = g - m
    zeta = np.asarray(k, dtype=float) - np.asarray(mvec, dtype=float)
    if c_m is None:
        c_m = curvature_matrix(m, y, lam)
    e_delta = (y[:, None] * delta * y[None, :]) / (lam * n * n)
    evals, evecs = np.linalg.eigh(c_m)
    evals = np.maximum(evals, 4.0 / n - 1e-12)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    gamma = float(np.linalg.norm(inv_sqrt @ e_delta @ inv_sqrt, 2))
    sol_c = solve_dual(m, y, lam, check_psd=False)
    c_ref = sol_c.c
    b = e_delta @ c_ref
    a_m = (y * np.asarray(mvec, dtype=float)) / (lam * n)
    a_z = (y * zeta) / (lam * n)
    inv = (evecs / evals) @ evecs.T

    def ellipsoid(a):
        if gamma >= 1.0:
            return math.inf
        cross = abs(float(a @ inv @ b))
        quad_a = float(a @ inv @ a)
        quad_b = float(b @ inv @ b)
        return (cross + math.sqrt(max(quad_a, 0.0) * max(quad_b, 0.0))) / (2.0 * (1.0 - gamma))

    direct = abs(float(zeta @ (y * c_ref))) / (lam * n)
    e_am = ellipsoid(a_m)
    e_az = ellipsoid(a_z)
    total = direct + e_am + e_az
    return {
        "gamma": gamma,
        "direct_test_term": direct,
        "ellipsoid_m": e_am,
        "ellipsoid_zeta": e_az,
        "bound": total,
        "c_reference": c_ref,
    }


def template_identities(n_mat: np.ndarray, masses: np.ndarray, labels_r: np.ndarray,
                        colors: np.ndarray, delta: np.ndarray, lam: float,
                        theta: np.ndarray, test_template: int) -> dict:
    """Block-level curvature identities: both sides of each equality.

    Builds s_a, the reduced resolvent R_0, the block action g_Delta, and
    compares the quotient expressions with the raw C_M^{-1} bilinear forms.
    """
    colors = np.asarray(colors, dtype=int)
    n = len(colors)
    r = n_mat.shape[0]
    y_r = np.asarray(labels_r, dtype=float)
    q = np.asarray(masses, dtype=float)
    y = y_r[colors]
    p_mem = np.zeros((n, r))
    p_mem[np.arange(n), colors] = 1.0
    m_n = n_mat[np.ix_(colors, colors)]
    c_m = curvature_matrix(m_n, y, lam)
    inv_cm = np.linalg.inv(c_m)

    n_a = n_mat[test_template]
    s_a = y_r * n_a
    a0 = 4.0 * np.eye(r) + (np.sqrt(q)[:, None] * ((y_r[:, None] * n_mat * y_r[None, :]))
                            * np.sqrt(q)[None, :]) / lam
    r0 = (np.sqrt(q)[:, None] * np.linalg.inv(a0) * np.sqrt(q)[None, :])

    beta = y_r * theta
    block_avg = np.zeros((r, r))
    sizes = np.bincount(colors, minlength=r).astype(float)
    for b_i in range(r):
        for c_i in range(r):
            block_avg[b_i, c_i] = delta[np.ix_(colors == b_i, colors == c_i)].sum() / (
                sizes[b_i] * sizes[c_i])
    g_delta = y_r * (block_avg @ (q * beta))

    c_ref = p_mem @ theta
    b = (y[:, None] * delta * y[None, :]) @ c_ref / (lam * n * n)
    a_m = (y * (p_mem @ n_a)) / (lam * n)
    b_par = p_mem @ (g_delta / (lam * n))
    b_perp = b - b_par

    lhs1 = float(a_m @ inv_cm @ a_m)
    rhs1 = float(s_a @ r0 @ s_a) / (lam * lam)
    lhs2 = float(a_m @ inv_cm @ b)
    rhs2 = float(s_a @ r0 @ g_delta) / (lam * lam)
    lhs3 = float(b @ inv_cm @ b)
    rhs3 = float(g_delta @ r0 @ g_delta) / (lam * lam) + n / 4.0 * float(b_perp @ b_perp)
    return {
        "leverage": (lhs1, rhs1),
        "alignment": (lhs2, rhs2),
        "decomposition": (lhs3, rhs3),
        "g_delta": g_delta,
        "b_perp_norm": float(np.linalg.norm(b_perp)),
    }
