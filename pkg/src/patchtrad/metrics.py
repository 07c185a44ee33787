"""Threshold-free evaluation: ROC-AUC (no point adjustment) and macro-averaging."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UndefinedMetricError


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DataError(f"{scores.size} scores but {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetricError(
            f"ROC-AUC needs both classes; got {n_pos} positives and {labels.size - n_pos} negatives")
    return scores, labels.astype(bool)


def roc_auc(scores, labels=None) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted 1/2.

    Accepts a labeled ``ScoreSeries`` or parallel score/label arrays.
    """
    if labels is None:
        if getattr(scores, "label", None) is None:
            raise UndefinedMetricError("score series carries no labels")
        scores, labels = scores.score, scores.label
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_bruteforce(scores, labels) -> float:
    """Explicit enumeration of every (positive, negative) pair."""
    s, y = _check(scores, labels)
    pos, neg = s[y], s[~y]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (pos.size * neg.size)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """False/true positive rates at every distinct threshold, from (0, 0) to (1, 1)."""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = last_of_group + 1 - tps
    return np.r_[0.0, fps / fps[-1]], np.r_[0.0, tps / tps[-1]]


@dataclass
class EvalReport:
    dataset_name: str
    auc: float
    n_pos: int
    n_neg: int
    sub_reports: list[EvalReport] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"dataset: {self.dataset_name}", f"auc: {self.auc:.6f}",
                 f"n_pos: {self.n_pos}", f"n_neg: {self.n_neg}"]
        if self.sub_reports:
            lines.append(f"sub_datasets: {len(self.sub_reports)}")
            lines += [f"  {r.dataset_name}: auc={r.auc:.6f} n_pos={r.n_pos} n_neg={r.n_neg}"
                      for r in self.sub_reports]
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[list]:
        rows = [[r.dataset_name, f"{r.auc:.6f}", r.n_pos, r.n_neg] for r in self.sub_reports]
        rows.append([self.dataset_name, f"{self.auc:.6f}", self.n_pos, self.n_neg])
        return rows


def evaluate(name: str, scores, labels=None) -> EvalReport:
    if labels is None:
        labels = scores.label
        scores = scores.score
    auc = roc_auc(scores, labels)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    return EvalReport(name, auc, n_pos, int(labels.size - n_pos))


def macro_average(reports: Sequence[EvalReport], name: str | None = None) -> EvalReport:
    """Unweighted mean AUC across sub-datasets; counts are summed."""
    reports = list(reports)
    if not reports:
        raise DataError("macro_average: no reports")
    if len(reports) == 1 and name is None:
        return reports[0]
    auc = float(np.mean([r.auc for r in reports]))
    return EvalReport(name or "macro", auc, sum(r.n_pos for r in reports),
                      sum(r.n_neg for r in reports), reports)


def write_report(report: EvalReport, out_dir, stem: str = "report") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    txt = out_dir / f"{stem}.txt"
    txt.write_text(report.to_text())
    csv_path = out_dir / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "auc", "n_pos", "n_neg"])
        w.writerows(report.csv_rows())
    return txt, csv_path
