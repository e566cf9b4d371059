"""Report rendering: matplotlib figures written to files next to the
delimited (CSV) outputs every reporting command emits."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import VariableCatalog
from .graph import CausalProbMatrix, SummaryGraph
from .metrics import MetricsReport


def save_probability_matrix_figure(
    probs: CausalProbMatrix, catalog: VariableCatalog, path: str | Path
) -> Path:
    """Heatmaps of the per-chunk edge probabilities: one panel per outcome
    plus the lag-collapsed variable-to-variable matrix."""
    path = Path(path)
    m = probs.v2o.shape[2]
    fig, axes = plt.subplots(1, m + 1, figsize=(4.2 * (m + 1), 4.2))
    axes = np.atleast_1d(axes)
    var_names = [v.abbreviation or v.name for v in catalog.dynamic]
    for j in range(m):
        ax = axes[j]
        im = ax.imshow(probs.v2o[:, :, j].T, vmin=0, vmax=1, cmap="viridis", aspect="auto")
        ax.set_title(f"{catalog.outcomes[j]}")
        ax.set_xlabel("lag chunk (0 = recent)")
        ax.set_ylabel("variable")
        ax.set_yticks(range(len(var_names)))
        ax.set_yticklabels(var_names, fontsize=6)
    ax = axes[m]
    pair = probs.v2v.max(axis=0)
    im = ax.imshow(pair, vmin=0, vmax=1, cmap="viridis", aspect="auto")
    ax.set_title("variable-to-variable (max over chunks)")
    ax.set_xlabel("effect")
    ax.set_ylabel("cause")
    fig.colorbar(im, ax=axes.tolist(), shrink=0.8)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_summary_graph_figure(summary: SummaryGraph, path: str | Path) -> Path:
    """Two-column layout, variables left and outcomes right; edge width
    follows the retained probability score."""
    path = Path(path)
    n = summary.n_dyn
    total = len(summary.names)
    m = total - n
    fig, ax = plt.subplots(figsize=(9, max(4.0, 0.32 * max(n, m))))
    pos = {}
    for i in range(n):
        pos[i] = (0.0, (n - 1 - i) / max(1, n - 1))
    for j in range(m):
        pos[n + j] = (1.0, (m - 1 - j) / max(1, m - 1) if m > 1 else 0.5)
    for src, dst in zip(*np.where(summary.adjacency)):
        x0, y0 = pos[int(src)]
        x1, y1 = pos[int(dst)]
        w = 0.4 + 2.6 * summary.scores[src, dst]
        color = "tab:red" if dst >= n else "tab:gray"
        ax.annotate(
            "",
            xy=(x1, y1),
            xytext=(x0, y0),
            arrowprops=dict(arrowstyle="-|>", lw=w, color=color, alpha=0.55),
        )
    for idx, name in enumerate(summary.names):
        x, y = pos[idx]
        kind_outcome = idx >= n
        ax.scatter([x], [y], s=220, c="tab:orange" if kind_outcome else "tab:blue", zorder=3)
        ax.annotate(
            name,
            (x, y),
            textcoords="offset points",
            xytext=(10 if kind_outcome else -10, 0),
            ha="left" if kind_outcome else "right",
            fontsize=7,
            zorder=4,
        )
    ax.set_xlim(-0.45, 1.45)
    ax.axis("off")
    ax.set_title("summary causal graph")
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def save_training_curves(report_rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    epochs = [r["epoch"] for r in report_rows]
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    axes[0].plot(epochs, [r.get("loss_outcome") for r in report_rows], label="outcome")
    axes[0].plot(epochs, [r.get("loss_v2v") for r in report_rows], label="next-step")
    axes[0].set_title("training losses")
    axes[0].set_xlabel("epoch")
    axes[0].legend()
    axes[1].plot(epochs, [r.get("val_mean_auroc") for r in report_rows], color="tab:green")
    axes[1].set_title("validation mean AUROC")
    axes[1].set_xlabel("epoch")
    axes[2].plot(epochs, [r.get("density_v2o") for r in report_rows], label="v2o")
    axes[2].plot(epochs, [r.get("density_v2v") for r in report_rows], label="v2v")
    axes[2].set_title("graph density (p >= 0.5)")
    axes[2].set_xlabel("epoch")
    axes[2].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_roc_pr_figure(scored: dict[str, tuple[np.ndarray, np.ndarray]], path: str | Path) -> Path:
    """ROC and PR curves per outcome from (scores, labels) pairs."""
    path = Path(path)
    fig, (ax_roc, ax_pr) = plt.subplots(1, 2, figsize=(9.5, 4.2))
    for name, (scores, labels) in sorted(scored.items()):
        order = np.argsort(-scores, kind="mergesort")
        y = labels[order]
        tps = np.cumsum(y)
        fps = np.cumsum(1 - y)
        n_pos, n_neg = max(tps[-1], 1), max(fps[-1], 1)
        ax_roc.plot(fps / n_neg, tps / n_pos, label=name, lw=1.2)
        precision = tps / np.maximum(tps + fps, 1)
        ax_pr.plot(tps / n_pos, precision, label=name, lw=1.2)
    ax_roc.plot([0, 1], [0, 1], ls="--", c="gray", lw=0.8)
    ax_roc.set_xlabel("false positive rate")
    ax_roc.set_ylabel("true positive rate")
    ax_roc.set_title("ROC")
    ax_pr.set_xlabel("recall")
    ax_pr.set_ylabel("precision")
    ax_pr.set_title("precision-recall")
    ax_roc.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def write_metrics_csv(report: MetricsReport, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "outcome", "auroc", "auprc", "brier", "auroc_ci_lo", "auroc_ci_hi", "n_pos", "n_neg", "reason"])
        for split in sorted(report.rows):
            for outcome in sorted(report.rows[split]):
                om = report.rows[split][outcome]
                ci = om.auroc_ci or (None, None)
                w.writerow(
                    [
                        split,
                        outcome,
                        _fmt(om.auroc),
                        _fmt(om.auprc),
                        _fmt(om.brier),
                        _fmt(ci[0]),
                        _fmt(ci[1]),
                        om.n_pos,
                        om.n_neg,
                        om.reason or "",
                    ]
                )
    return path


def write_recovery_csv(scores: dict[str, dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["graph", "auroc", "precision", "recall", "f1", "threshold", "n_true_edges", "n_instances"])
        for name in sorted(scores):
            s = scores[name]
            w.writerow(
                [name, _fmt(s["auroc"]), _fmt(s["precision"]), _fmt(s["recall"]), _fmt(s["f1"]),
                 _fmt(s["threshold"]), s["n_true_edges"], s["n_instances"]]
            )
    return path


def save_calibration_csv(bins: list[tuple[float, float, int]], path: str | Path) -> Path:
    """(bin center, predicted mean, observed rate, count) triples as CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predicted_mean", "observed_rate", "count"])
        for predicted, observed, count in bins:
            w.writerow([_fmt(predicted), _fmt(observed), count])
    return path


def _fmt(x):
    if x is None:
        return ""
    return f"{x:.9g}"
