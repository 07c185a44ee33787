"""Last-patch anomaly scoring over a test stream."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .errors import DataError, DimensionError, NumericError
from .ingest import LabeledTimeSeries, TimeSeries
from .model import ModelState, forward
from .trainer import per_patch_errors


@dataclass(frozen=True)
class ScoreSeries:
    time_index: np.ndarray
    score: np.ndarray
    label: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.time_index, dtype=np.int64)
        score = np.asarray(self.score, dtype=np.float64)
        if idx.shape != score.shape or idx.ndim != 1:
            raise DataError(f"time_index {idx.shape} and score {score.shape} must be equal-length vectors")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise DataError("time_index must be strictly increasing")
        if not np.all(np.isfinite(score)) or np.any(score < 0):
            raise NumericError("scores must be finite and non-negative")
        object.__setattr__(self, "time_index", idx)
        object.__setattr__(self, "score", score)
        if self.label is not None:
            label = np.asarray(self.label)
            if label.shape != score.shape:
                raise DataError(f"{label.shape[0]} labels for {score.shape[0]} scores")
            if not np.isin(label, (0, 1)).all():
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "label", label.astype(np.int8))

    def __len__(self) -> int:
        return self.score.shape[0]


def last_patch_scores(windows: np.ndarray, state: ModelState) -> np.ndarray:
    """Eval-mode last-patch reconstruction error for a ``(B, M, w+1)`` batch."""
    with tc.no_grad():
        x_p, recon = forward(windows, state, training=False)
    return per_patch_errors(x_p, recon)[..., -1]


def anomaly_score(window, state: ModelState) -> float:
    """Squared reconstruction error of the final patch, summed over modalities."""
    arr = np.asarray(window.data if isinstance(window, tc.Tensor) else window)
    if arr.ndim != 2:
        raise DimensionError(f"anomaly_score: expected one (M, w+1) window, got {arr.shape}")
    return float(last_patch_scores(arr[None], state)[0])


def stream_windows(test_values: np.ndarray, context: np.ndarray, window_w: int) -> np.ndarray:
    """One ``(M, w+1)`` window per test row, each ending at that row."""
    context = np.asarray(context)
    if context.shape[0] != window_w:
        raise DataError(f"context must hold exactly w={window_w} observations, got {context.shape[0]}")
    if context.shape[1:] != test_values.shape[1:]:
        raise DataError(f"context has M={context.shape[1]}, test has M={test_values.shape[1]}")
    full = np.concatenate([context, test_values], axis=0)
    return np.lib.stride_tricks.sliding_window_view(full, window_w + 1, axis=0)


def score_stream(test: TimeSeries | np.ndarray, state: ModelState, context: np.ndarray | None = None,
                 batch_size: int = 256) -> ScoreSeries:
    """Score every test observation from the ``w`` observations preceding it.

    The first ``w`` windows borrow their history from ``context`` (the train
    tail, defaulting to ``state.context``). ``test`` and ``context`` must be
    normalized with the training statistics already.
    """
    cfg = state.cfg
    values = test.values if isinstance(test, TimeSeries) else np.asarray(test, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] == 0:
        raise DataError("empty test series")
    if values.shape[1] != cfg.n_modalities:
        raise DataError(f"model expects M={cfg.n_modalities} modalities, test data has M={values.shape[1]}")
    if context is None:
        context = state.context
    if context is None:
        raise DataError("no scoring context: pass the last w training observations")
    windows = stream_windows(values.astype(state.dtype), np.asarray(context, dtype=state.dtype),
                             cfg.patch.window_w)
    scores = np.concatenate([last_patch_scores(windows[i:i + batch_size], state)
                             for i in range(0, len(windows), batch_size)])
    labels = test.labels if isinstance(test, LabeledTimeSeries) else None
    return ScoreSeries(np.arange(len(scores)), scores, labels)


def threshold_from_quantile(reference: ScoreSeries | np.ndarray, q: float) -> float:
    """Linear-interpolation ``q``-quantile of reference scores, for binary alerting."""
    scores = reference.score if isinstance(reference, ScoreSeries) else np.asarray(reference, dtype=float)
    if scores.size == 0:
        raise DataError("threshold_from_quantile: no reference scores")
    if not 0.0 < q < 1.0:
        raise DataError(f"quantile must lie in (0, 1), got {q}")
    return float(np.quantile(scores, q))


def write_scores(path, scores: ScoreSeries) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        has_label = scores.label is not None
        w.writerow(["index", "score"] + (["label"] if has_label else []))
        for i in range(len(scores)):
            row = [int(scores.time_index[i]), repr(float(scores.score[i]))]
            if has_label:
                row.append(int(scores.label[i]))
            w.writerow(row)
    return path


def read_scores(path) -> ScoreSeries:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["index", "score"]:
                raise DataError(f"{path}: expected header index,score[,label], got {header}")
            rows = [r for r in reader if r]
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    try:
        idx = [int(r[0]) for r in rows]
        score = [float(r[1]) for r in rows]
        label = [int(r[2]) for r in rows] if len(header) > 2 else None
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed score row ({exc})") from None
    return ScoreSeries(np.array(idx), np.array(score), None if label is None else np.array(label))
