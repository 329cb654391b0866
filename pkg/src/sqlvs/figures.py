"""Figure rendering for run reports and crossover sweeps.

Renders next to the delimited output files: stacked per-strategy breakdown
bars (the four components plus residual) and log-log crossover curves per
index kind. Files are PNG; paths are returned so callers can list them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_COMPONENTS = [
    ("relational_ops", "Relational Operators", "#4878d0"),
    ("vector_search", "Vector Search", "#ee854a"),
    ("data_movement", "Data Movement", "#6acc64"),
    ("index_movement", "Index Movement", "#d65f5f"),
    ("residual", "Residual", "#956cb4"),
]


def render_breakdown(runs: list, path, title: str = "Per-run time breakdown") -> str:
    """Stacked horizontal bars, one per run record, in ms."""
    labels = [f"{r.query} {r.vs_mode} {r.strategy}" for r in runs]
    fig_h = max(2.0, 0.45 * len(runs) + 1.2)
    fig, ax = plt.subplots(figsize=(9, fig_h))
    left = [0.0] * len(runs)
    for field, label, color in _COMPONENTS:
        vals = [getattr(r, field) * 1e3 for r in runs]
        ax.barh(range(len(runs)), vals, left=left, label=label, color=color)
        left = [l + v for l, v in zip(left, vals)]
    ax.set_yticks(range(len(runs)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("simulated time (ms)")
    ax.set_title(title)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_crossover(points: list, path, title: str = "Search time vs batch size") -> str:
    """One panel per index kind; log-log curves per strategy."""
    kinds = sorted({p.index_kind for p in points})
    fig, axes = plt.subplots(1, max(1, len(kinds)), figsize=(6 * max(1, len(kinds)), 4.5),
                             squeeze=False)
    styles = {"cpu": ("k", "-"), "gpu": ("#2ca02c", "-"), "copy_i": ("#1f77b4", "-"),
              "copy_di": ("#d62728", "-"), "theoretical": ("#7f7f7f", "--")}
    for ax, kind in zip(axes[0], kinds):
        for strategy in ("cpu", "gpu", "copy_i", "copy_di", "theoretical"):
            series = sorted((p.batch, p.seconds) for p in points
                            if p.index_kind == kind and p.strategy == strategy)
            if not series:
                continue
            color, ls = styles[strategy]
            ax.plot([b for b, _ in series], [s * 1e3 for _, s in series],
                    label=strategy, color=color, linestyle=ls, marker="o", ms=3)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("query batch size")
        ax.set_ylabel("simulated VS time (ms)")
        ax.set_title(f"{kind} index")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
