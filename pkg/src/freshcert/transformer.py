"""Depth-one frozen-feature transformer kernel: finite width and limits.

The attention-kernel limit replaces the CLS logit rows by a centered
Gaussian pair with covariance (1+gamma^2) [[XX'+g2 I, XY'+g2 I], ...];
the transformer-kernel limit composes a bivariate Gaussian expectation
of sigma through the attention covariances.  Finite-width evaluation
runs the displayed architecture exactly, head by head, with every
frozen parameter standard normal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AttnConfig",
    "WidthConfig",
    "identity",
    "relu",
    "softplus_sharp",
    "one_hot",
    "attn_kernel_limit",
    "trans_kernel_limit",
    "finite_width_features",
    "finite_width_kernel",
    "convergence_probe",
    "gauss_hermite_pair",
]


def identity(x):
    return x


def relu(x):
    return np.maximum(x, 0.0)


def softplus_sharp(sharpness: float = 20.0) -> Callable:
    """C^2 ReLU surrogate log(1+e^{s x})/s."""
    def act(x):
        return np.logaddexp(0.0, sharpness * np.asarray(x)) / sharpness
    act.__name__ = f"softplus_{sharpness:g}"
    return act


@dataclass(frozen=True)
class AttnConfig:
    k: int
    beta: float = 0.0
    gamma: float = 0.0
    activation: Callable = identity

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be nonnegative")
        if not math.isfinite(self.beta) or not math.isfinite(self.gamma):
            raise ValueError("beta and gamma must be finite")


@dataclass(frozen=True)
class WidthConfig:
    heads: int
    d_emb: int
    d_head: int
    d_mlp: int
    seed: int = 0

    def __post_init__(self):
        for name in ("heads", "d_emb", "d_head", "d_mlp"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def one_hot(tokens: tuple[int, ...], vocab: int) -> np.ndarray:
    x = np.zeros((len(tokens), vocab))
    x[np.arange(len(tokens)), list(tokens)] = 1.0
    return x


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _pair_covariance(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    k = x.shape[0]
    g2 = gamma * gamma
    eye = np.eye(k)
    top = np.hstack([x @ x.T + g2 * eye, x @ y.T + g2 * eye])
    bot = np.hstack([y @ x.T + g2 * eye, y @ y.T + g2 * eye])
    return (1.0 + g2) * np.vstack([top, bot])


def attn_kernel_limit(x: np.ndarray, y: np.ndarray, cfg: AttnConfig,
                      mc_samples: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """Limit attention kernel value and its Monte Carlo standard error.

    beta = 0 short-circuits to the exact uniform-attention value with zero
    error; otherwise the CLS logit pair is sampled from its limiting
    Gaussian with antithetic pairing.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = x.shape[0]
    value_mat = x @ y.T + cfg.gamma ** 2 * np.eye(k)
    if cfg.beta == 0.0:
        ones = np.full(k, 1.0 / k)
        return float(ones @ value_mat @ ones), 0.0
    cov = _pair_covariance(x, y, cfg.gamma)
    try:
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(2 * k))
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance-error: limit covariance not PSD") from exc
    rng = np.random.default_rng(seed)
    half = max(1, mc_samples // 2)
    z = rng.standard_normal((half, 2 * k))
    draws = np.vstack([z, -z]) @ chol.T
    sx = _softmax(cfg.beta * draws[:, :k])
    sy = _softmax(cfg.beta * draws[:, k:])
    vals = np.einsum("ip,pq,iq->i", sx, value_mat, sy)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return mean, stderr


def gauss_hermite_pair(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and normalized weights."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    return nodes, weights / math.sqrt(2.0 * math.pi)


def _gaussian_pair_expectation(sigma: Callable, cxx: float, cxy: float, cyy: float,
                               order: int) -> float:
    """E[sigma(u) sigma(v)] for centered Gaussians with the given covariance."""
    nodes, weights = gauss_hermite_pair(order)
    su = math.sqrt(max(cxx, 0.0))
    if su == 0.0:
        u_vals = sigma(np.zeros(1))
        v_sd = math.sqrt(max(cyy, 0.0))
        v = sigma(v_sd * nodes)
        return float(u_vals[0] * (weights @ v))
    rhoscale = cxy / su
    resid = max(cyy - rhoscale * rhoscale, 0.0)
    sr = math.sqrt(resid)
    u = su * nodes
    su_vals = np.asarray(sigma(u))
    total = 0.0
    for i, wi in enumerate(weights):
        v = rhoscale * nodes[i] + sr * nodes
        total += wi * su_vals[i] * float(weights @ np.asarray(sigma(v)))
    return total


def trans_kernel_limit(x: np.ndarray, y: np.ndarray, cfg: AttnConfig,
                       mc_samples: int = 200_000, quadrature_order: int = 40,
                       seed: int = 0) -> float:
    """Frozen-feature transformer kernel limit via attention covariances."""
    kxx, _ = attn_kernel_limit(x, x, cfg, mc_samples, seed)
    kyy, _ = attn_kernel_limit(y, y, cfg, mc_samples, seed + 1)
    kxy, _ = attn_kernel_limit(x, y, cfg, mc_samples, seed + 2)
    cap = math.sqrt(max(kxx, 0.0) * max(kyy, 0.0))
    if abs(kxy) > cap:
        if abs(kxy) > cap + 1e-6 * max(1.0, cap):
            warnings.warn(f"attention cross value {kxy:.6g} clamped to +-{cap:.6g}")
        kxy = math.copysign(cap, kxy)
    if cfg.activation is identity:
        return kxy
    return _gaussian_pair_expectation(cfg.activation, kxx, kxy, kyy, quadrature_order)


def finite_width_features(inputs: list[np.ndarray], cfg: AttnConfig,
                          widths: WidthConfig) -> np.ndarray:
    """Frozen feature vectors z_2 / sqrt(d_emb) for a shared parameter draw.

    Parameters are materialized head by head so d_emb up to a few thousand
    stays cheap; the same seed gives the same frozen network.
    """
    rng = np.random.default_rng(widths.seed)
    vocab = inputs[0].shape[1]
    k = inputs[0].shape[0]
    de, dh, dm, heads = widths.d_emb, widths.d_head, widths.d_mlp, widths.heads
    w_e = rng.standard_normal((vocab, de))
    pos = rng.standard_normal((k, de))
    z0 = [x @ w_e + cfg.gamma * pos for x in inputs]
    z1 = [np.zeros(de) for _ in inputs]
    for _ in range(heads):
        w_k = rng.standard_normal((dh, de))
        w_q = rng.standard_normal((dh, de))
        w_v = rng.standard_normal((dh, de))
        w_o = rng.standard_normal((dh, de))
        for idx, z in enumerate(z0):
            cls = z[-1]
            logits = (z @ (w_k.T @ (w_q @ cls))) / (de * math.sqrt(dh))
            s = _softmax(cfg.beta * logits)
            z1[idx] = z1[idx] + w_o.T @ (w_v @ (z.T @ s)) / math.sqrt(dh * de)
    w_a = rng.standard_normal((dm, de))
    w_b = rng.standard_normal((dm, de))
    feats = []
    for z in z1:
        hidden = np.asarray(cfg.activation(w_a @ (z / math.sqrt(heads)) / math.sqrt(de)))
        feats.append(w_b.T @ hidden / math.sqrt(dm) / math.sqrt(de))
    return np.asarray(feats)


def finite_width_kernel(x: np.ndarray, y: np.ndarray, cfg: AttnConfig,
                        widths: WidthConfig) -> float:
    """Empirical random-feature kernel z_2(X)' z_2(Y) / d_emb."""
    feats = finite_width_features([x, y], cfg, widths)
    return float(feats[0] @ feats[1])


def convergence_probe(inputs: list[np.ndarray], cfg: AttnConfig,
                      width_grid: list[int], trials: int = 20, seed: int = 0,
                      mc_samples: int = 200_000, quadrature_order: int = 40,
                      head_ratio: float = 0.25, mlp_ratio: float = 1.0) -> dict:
    """Max |finite-width - limit| over all input pairs, per width and trial."""
    m = len(inputs)
    limit = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            limit[i, j] = limit[j, i] = trans_kernel_limit(
                inputs[i], inputs[j], cfg, mc_samples, quadrature_order,
                seed=seed + 31 * i + j)
    errors: dict[int, list[float]] = {}
    for width in width_grid:
        errs = []
        for t in range(trials):
            widths = WidthConfig(
                heads=max(1, int(width * head_ratio)), d_emb=width,
                d_head=max(1, int(width * head_ratio)),
                d_mlp=max(1, int(width * mlp_ratio)),
                seed=seed + 1000 * t + width)
            feats = finite_width_features(inputs, cfg, widths)
            hat = feats @ feats.T
            errs.append(float(np.max(np.abs(hat - limit))))
        errors[width] = errs
    return {"limit": limit, "errors": errors}
