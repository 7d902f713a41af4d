"""Figure rendering for run reports.

Every CLI report path can render a PNG next to its delimited output:
training-loss curves from the epoch log, bar charts for evaluation rows,
and grouped bars for ablation tables.  Rendering is headless (Agg).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_CURVE_COLUMNS = ("l_explicit", "l_latent", "l_mml", "l_p", "objective")


def render_training_curves(log_rows, path):
    """Loss components and the total objective against the epoch index."""
    if not log_rows:
        raise ValueError("no training log rows to plot")
    epochs = [row["epoch"] for row in log_rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for column in _CURVE_COLUMNS:
        ax.plot(epochs, [row[column] for row in log_rows], label=column)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss (batch mean)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_metric_bars(rows, path, title=""):
    """Bar chart of ``(metric, K) -> value`` evaluation rows."""
    if not rows:
        raise ValueError("no evaluation rows to plot")
    names = [f"{r['metric']}@{r['k']}" for r in rows]
    values = [r["value"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(rows)), 4))
    bars = ax.bar(range(len(rows)), values, color="#4878a8")
    errors = [r.get("std") for r in rows]
    if any(e is not None for e in errors):
        ax.errorbar(range(len(rows)), values,
                    yerr=[e or 0.0 for e in errors],
                    fmt="none", ecolor="#333333", capsize=3)
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_xticks(range(len(rows)), names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_ablation_bars(table, metric_names, path):
    """Grouped bars: one group per variant, one bar per reported metric."""
    if not table:
        raise ValueError("no ablation rows to plot")
    variants = [row["variant"] for row in table]
    width = 0.8 / max(1, len(metric_names))
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(variants)), 4.5))
    for j, name in enumerate(metric_names):
        values = [row.get(name) if row.get(name) is not None else 0.0
                  for row in table]
        offsets = [i + j * width for i in range(len(variants))]
        ax.bar(offsets, values, width=width, label=name)
    centers = [i + 0.4 - width / 2 for i in range(len(variants))]
    ax.set_xticks(centers, variants, rotation=20, ha="right")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
