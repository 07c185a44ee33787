"""Figures written next to the CSV outputs of each command."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_loss(losses, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(np.arange(1, len(losses) + 1), losses, marker="o", ms=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean window loss")
        if min(losses) > 0:
            ax.set_yscale("log")
        ax.set_title("training loss")
        return _save(fig, path)


def plot_scores(scores, path, threshold: float | None = None) -> Path:
    """Score trace with labeled anomalies marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(scores.time_index, scores.score, color="0.3", lw=0.8, label="score")
        if scores.label is not None and scores.label.any():
            hit = scores.label.astype(bool)
            ax.scatter(scores.time_index[hit], scores.score[hit], s=12, color="tab:red",
                       zorder=3, label="labeled anomaly")
        if threshold is not None:
            ax.axhline(threshold, color="tab:blue", ls="--", lw=0.8, label="threshold")
        ax.set_xlabel("test index")
        ax.set_ylabel("last-patch error")
        if np.all(scores.score > 0):
            ax.set_yscale("log")
        ax.legend(loc="lower left", bbox_to_anchor=(0.0, 1.0), ncol=3)
        return _save(fig, path)


def plot_roc(curves: dict[str, tuple[np.ndarray, np.ndarray, float]], path) -> Path:
    """``curves`` maps a name to ``(fpr, tpr, auc)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot([0, 1], [0, 1], color="0.7", ls=":", lw=0.8)
        for name, (fpr, tpr, auc) in curves.items():
            ax.plot(fpr, tpr, label=f"{name} (AUC {auc:.3f})")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_ablation(rows, path) -> Path:
    ok = [r for r in rows if r["auc"] is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        labels = [f"{r['p_len']}/{r['stride']}" for r in ok]
        ax.bar(np.arange(len(ok)), [r["auc"] for r in ok], color="tab:blue")
        ax.set_xticks(np.arange(len(ok)), labels, rotation=45, ha="right")
        ax.set_xlabel("patch length / stride")
        ax.set_ylabel("ROC-AUC")
        ax.set_ylim(0, 1)
        return _save(fig, path)


def plot_bench(rows, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        w = [r["window"] for r in rows]
        ax.plot(w, [r["median_ms"] for r in rows], marker="o", ms=3, label="median")
        ax.plot(w, [r["p90_ms"] for r in rows], marker="s", ms=3, ls="--", label="p90")
        ax.set_xlabel("window size w")
        ax.set_ylabel("batch latency (ms)")
        ax.legend(loc="upper left")
        return _save(fig, path)
