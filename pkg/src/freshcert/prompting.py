"""First-order margin effect of an abstraction-prompted kernel.

For a template-kernel path N_eta = N + eta H + o(eta), the ideal
logistic scorer moves at rate lambda J0^{-1} N^{-1} H N^{-1} g0, where
J0 is the ideal Hessian at eta = 0.  The per-template signed margin
gain is the corresponding coordinate, multiplied by the label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .klr import SolverConfig, solve_ideal

__all__ = [
    "PromptReport",
    "margin_derivative",
    "fd_check",
    "estimate_h",
]


@dataclass(frozen=True)
class PromptReport:
    g0: np.ndarray
    j0: np.ndarray
    derivative: np.ndarray
    margin_gains: np.ndarray   # C_a(H) = y_a * derivative_a


def margin_derivative(n_mat: np.ndarray, h_mat: np.ndarray, q: np.ndarray,
                      lam: float, labels: np.ndarray,
                      config: SolverConfig = SolverConfig()) -> PromptReport:
    """Exact first-order response of the ideal scorer to N -> N + eta H."""
    n_mat = np.asarray(n_mat, dtype=float)
    h_mat = 0.5 * (np.asarray(h_mat, dtype=float) + np.asarray(h_mat, dtype=float).T)
    y = np.asarray(labels, dtype=float)
    q = np.asarray(q, dtype=float)
    ideal = solve_ideal(n_mat, q, lam, y, config)
    g0 = ideal.g
    n_inv = np.linalg.inv(n_mat)
    u = y * g0
    sig = 1.0 / (1.0 + np.exp(-u))
    j0 = np.diag(q * sig * (1.0 - sig)) + lam * n_inv
    rhs = lam * (n_inv @ h_mat @ n_inv @ g0)
    deriv = np.linalg.solve(j0, rhs)
    return PromptReport(g0, j0, deriv, y * deriv)


def fd_check(n_mat: np.ndarray, h_mat: np.ndarray, q: np.ndarray, lam: float,
             labels: np.ndarray, eta_grid: tuple[float, ...] = (1e-3, 1e-4),
             config: SolverConfig = SolverConfig()) -> dict:
    """Central differences of the ideal minimizer against the formula.

    Shrinks any eta that breaks positive definiteness of N + eta H.
    Returns per-eta max absolute errors; the ratio between consecutive
    grid points exposes the O(eta^2) truncation order.
    """
    n_mat = np.asarray(n_mat, dtype=float)
    h_mat = 0.5 * (np.asarray(h_mat) + np.asarray(h_mat).T)
    report = margin_derivative(n_mat, h_mat, q, lam, labels, config)
    errors = {}
    for eta in eta_grid:
        step = float(eta)
        for _ in range(60):
            ok = True
            for sgn in (+1.0, -1.0):
                eigs = np.linalg.eigvalsh(n_mat + sgn * step * h_mat)
                if eigs.min() <= 0:
                    ok = False
            if ok:
                break
            step /= 2.0
        plus = solve_ideal(n_mat + step * h_mat, q, lam, labels, config).g
        minus = solve_ideal(n_mat - step * h_mat, q, lam, labels, config).g
        fd = (plus - minus) / (2.0 * step)
        errors[step] = float(np.max(np.abs(fd - report.derivative)))
    return {"errors": errors, "derivative": report.derivative, "g0": report.g0}


def estimate_h(prompted_entry: Callable[[float, int, int, np.random.Generator], float],
               base_entry: np.ndarray, r: int, eta0: float = 1e-4,
               mc_budget: int = 1000, seed: int = 0,
               gate_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference estimate of H from an eta-indexed kernel mean.

    prompted_entry(eta, a, b, rng) returns one draw of the augmented
    kernel between fresh instantiations of templates a and b; the eta=0
    mean must match base_entry (the prompt gate).  Returns the
    symmetrized estimate and elementwise standard errors.
    """
    rng = np.random.default_rng(seed)
    h = np.zeros((r, r))
    se = np.zeros((r, r))
    for a in range(r):
        for b in range(a, r):
            zero = np.array([prompted_entry(0.0, a, b, rng) for _ in range(mc_budget)])
            if abs(zero.mean() - base_entry[a, b]) > gate_tol + 4.0 * zero.std(ddof=1) / math.sqrt(mc_budget):
                raise ValueError(
                    f"prompt-gate-violated: eta=0 mean {zero.mean():.6g} vs base "
                    f"{base_entry[a, b]:.6g} at ({a},{b})")
            plus = np.array([prompted_entry(eta0, a, b, rng) for _ in range(mc_budget)])
            minus = np.array([prompted_entry(-eta0, a, b, rng) for _ in range(mc_budget)])
            diff = (plus - minus) / (2.0 * eta0)
            h[a, b] = h[b, a] = float(diff.mean())
            se[a, b] = se[b, a] = float(diff.std(ddof=1) / math.sqrt(mc_budget))
    return 0.5 * (h + h.T), se
