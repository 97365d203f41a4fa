"""Static figure renderers for freshcert CLI outputs."""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schemas import (BUDGET_COLUMNS, load_case_table, load_graph, load_probe,
                      load_sweep)

ROUTE_LABELS = {"b_cs": "CS", "b_deg": "DEG", "b_bd": "BD",
                "b_anova": "ANOVA", "b_bf": "BF"}
NODE_COLORS = ["#4878cf", "#e24a33", "#6acc65", "#956cb4", "#c4ad66"]


def plot_certificates(table_csv: str, out_image: str) -> None:
    """Grouped budget bars per case plus the log ratio against the proxy."""
    rows = load_case_table(table_csv)
    names = [r["case"] for r in rows]
    x = np.arange(len(rows))
    width = 0.14
    fig, (ax_top, ax_bot) = plt.subplots(
        2, 1, figsize=(max(7.0, 1.3 * len(rows)), 6.4),
        gridspec_kw={"height_ratios": [2.2, 1.0]})
    for k, col in enumerate(BUDGET_COLUMNS):
        vals = [r[col] for r in rows]
        ax_top.bar(x + (k - 2) * width, vals, width,
                   label=ROUTE_LABELS[col])
    ax_top.plot(x, [r["b_rho"] for r in rows], "k*--", markersize=10,
                label="scalar proxy")
    for i, r in enumerate(rows):
        ax_top.annotate(r["route"], (x[i], r["b_sharp"]),
                        textcoords="offset points", xytext=(0, -14),
                        ha="center", fontsize=8)
    ax_top.set_yscale("log")
    ax_top.set_xticks(x, names)
    ax_top.set_ylabel("budget value")
    ax_top.legend(ncols=3, fontsize=8)
    ax_top.set_title("five collision-graph budgets versus the scalar proxy")

    ratios = [r["log10_ratio"] for r in rows]
    ax_bot.bar(x, ratios, 0.5, color=["#2a9d8f" if v > 0 else "#b3432b"
                                      for v in ratios])
    ax_bot.axhline(0.0, color="k", linewidth=0.8)
    ax_bot.set_xticks(x, names)
    ax_bot.set_ylabel("log10(proxy / minimum)")
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)


def _spring_layout(n_nodes: int, edges: list[tuple[int, int]],
                   iterations: int = 120, seed: int = 0) -> np.ndarray:
    """Small deterministic force layout; avoids a graph-library dependency."""
    rng = np.random.default_rng(seed)
    pos = rng.standard_normal((n_nodes, 2))
    k = 1.0 / math.sqrt(max(n_nodes, 1))
    for it in range(iterations):
        disp = np.zeros_like(pos)
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=2) + 1e-9
        rep = k * k / dist ** 2
        disp += (diff * rep[:, :, None]).sum(axis=1)
        for a, b in edges:
            d = pos[a] - pos[b]
            norm = np.linalg.norm(d) + 1e-9
            pull = d / norm * (norm ** 2 / k)
            disp[a] -= pull * 0.5
            disp[b] += pull * 0.5
        step = 0.1 * (1.0 - it / iterations) + 0.01
        lengths = np.linalg.norm(disp, axis=1) + 1e-9
        pos += disp / lengths[:, None] * np.minimum(lengths, step)[:, None]
    pos -= pos.mean(axis=0)
    scale = np.abs(pos).max() or 1.0
    return pos / scale


def plot_graph(graph_json: str, out_image: str, ax=None) -> None:
    """Colored collision graph: signed train edges, highlighted test vertex."""
    payload = load_graph(graph_json)
    nodes = payload["nodes"]
    index = {n["id"]: i for i, n in enumerate(nodes)}
    edges = [(index[e["source"]], index[e["target"]]) for e in payload["edges"]]
    pos = _spring_layout(len(nodes), edges, seed=7)
    own_fig = ax is None
    if own_fig:
        fig, ax = plt.subplots(figsize=(5.2, 5.2))
    for e, (a, b) in zip(payload["edges"], edges):
        test_edge = bool(e.get("test_edge"))
        weight = e["weight"]
        color = "#888888" if test_edge else ("#2a6fb0" if weight >= 0 else "#c43b3b")
        style = ":" if test_edge else "-"
        ax.plot([pos[a, 0], pos[b, 0]], [pos[a, 1], pos[b, 1]], style,
                color=color, linewidth=0.7 + 1.6 * min(abs(weight), 1.0),
                alpha=0.75, zorder=1)
    for n, p in zip(nodes, pos):
        if n["kind"] == "test":
            ax.scatter(*p, s=160, marker="*", color="#f2a900",
                       edgecolor="k", zorder=3)
        else:
            ax.scatter(*p, s=36,
                       color=NODE_COLORS[n["color"] % len(NODE_COLORS)],
                       edgecolor="k", linewidth=0.3, zorder=2)
    ax.set_title(payload["name"])
    ax.set_axis_off()
    if own_fig:
        fig.tight_layout()
        fig.savefig(out_image, dpi=150)
        plt.close(fig)


def plot_graph_panels(graph_jsons: list[str], out_image: str) -> None:
    """Grid of collision graphs, one panel per exported case."""
    cols = min(4, len(graph_jsons))
    rows = math.ceil(len(graph_jsons) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.4 * cols, 3.4 * rows))
    axes = np.atleast_1d(axes).ravel()
    for ax in axes[len(graph_jsons):]:
        ax.set_axis_off()
    for path, ax in zip(graph_jsons, axes):
        plot_graph(path, "", ax=ax)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)


def plot_curves(sweep_csv: str, out_image: str) -> None:
    """Certificate terms along a sweep axis (log-log where positive)."""
    rows = load_sweep(sweep_csv)
    if not rows:
        raise ValueError("sweep CSV carries no rows")
    axis = rows[0]["axis"]
    xs = np.array([r["value"] for r in rows])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    series = ["b_sharp"] + [c for c in BUDGET_COLUMNS if c in rows[0]]
    for col in series:
        ys = np.array([float(r[col]) for r in rows])
        finite = np.isfinite(ys)
        label = "minimum" if col == "b_sharp" else ROUTE_LABELS[col]
        ax.plot(xs[finite], ys[finite], marker="o", label=label,
                linewidth=2.0 if col == "b_sharp" else 1.0)
    if "realized_error" in rows[0]:
        ys = np.array([float(r["realized_error"]) for r in rows])
        ax.plot(xs, ys, "k--", label="realized error")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)


def plot_convergence(probe_csv: str, out_image: str) -> None:
    """Finite-width kernel error distribution per width."""
    rows = load_probe(probe_csv)
    widths = sorted({r["width"] for r in rows})
    data = [[r["max_error"] for r in rows if r["width"] == w] for w in widths]
    fig, ax = plt.subplots(figsize=(5.4, 4.0))
    ax.boxplot(data, tick_labels=[str(w) for w in widths])
    ax.set_yscale("log")
    ax.set_xlabel("width")
    ax.set_ylabel("max kernel error over pairs")
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)
