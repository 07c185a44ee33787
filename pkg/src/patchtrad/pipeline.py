"""Load -> normalize -> train -> score -> evaluate, for one dataset or a manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .detector import ScoreSeries, score_stream
from .errors import DataError
from .ingest import (LabeledTimeSeries, ManifestEntry, TimeSeries, fit_normalizer, load_csv,
                     resolve_manifest)
from .metrics import EvalReport, evaluate, macro_average
from .model import ModelState
from .patcher import PatchConfig
from .trainer import TrainResult, train

log = logging.getLogger(__name__)


@dataclass
class EntryRun:
    entry: ManifestEntry
    result: TrainResult
    scores: ScoreSeries
    report: EvalReport


def entries(cfg: RunConfig) -> tuple[str, list[ManifestEntry]]:
    """The dataset's sub-datasets; a plain train/test pair is a one-entry manifest."""
    d = cfg.dataset
    if d.manifest is not None:
        manifest = resolve_manifest(cfg.path(d.manifest))
        return d.name or manifest.name, list(manifest.entries)
    train_csv, test_csv = cfg.path(d.train_csv), cfg.path(d.test_csv)
    missing = [str(p) for p in (train_csv, test_csv) if not p.is_file()]
    if missing:
        raise DataError(f"dataset files not found: {missing}")
    name = d.name or train_csv.stem
    return name, [ManifestEntry(name, train_csv, test_csv, d.label_column, tuple(d.ignore_columns))]


def load_train(entry: ManifestEntry) -> TimeSeries:
    return load_csv(entry.train_csv, ignore_columns=entry.ignore_columns)


def load_test(entry: ManifestEntry) -> LabeledTimeSeries:
    return load_csv(entry.test_csv, label_column=entry.label_column, ignore_columns=entry.ignore_columns)


def fit(cfg: RunConfig, train_series: TimeSeries, patch: PatchConfig | None = None) -> TrainResult:
    norm = fit_normalizer(train_series)
    model_cfg = cfg.model_config(train_series.M, patch)
    return train(norm.apply(train_series), model_cfg, cfg.train, normalizer=norm)


def score(state: ModelState, test: TimeSeries, batch_size: int = 256) -> ScoreSeries:
    """Normalize ``test`` with the state's training statistics, then score it."""
    if test.M != state.cfg.n_modalities:
        raise DataError(f"checkpoint expects M={state.cfg.n_modalities} modalities, test data has M={test.M}")
    if state.normalizer is not None:
        test = state.normalizer.apply(test)
    return score_stream(test, state, batch_size=batch_size)


def run_entry(cfg: RunConfig, entry: ManifestEntry, patch: PatchConfig | None = None) -> EntryRun:
    train_series = load_train(entry)
    test = load_test(entry)
    if test.M != train_series.M:
        raise DataError(f"{entry.name}: train has M={train_series.M}, test has M={test.M}")
    result = fit(cfg, train_series, patch)
    scores = score(result.state, test, cfg.score.batch_size)
    report = evaluate(entry.name, scores)
    log.info("%s: auc %.4f", entry.name, report.auc)
    return EntryRun(entry, result, scores, report)


def run_dataset(cfg: RunConfig, patch: PatchConfig | None = None) -> tuple[EvalReport, list[EntryRun]]:
    """Train and evaluate every sub-dataset independently; macro-average when there are several."""
    name, todo = entries(cfg)
    runs = [run_entry(cfg, e, patch) for e in todo]
    if len(runs) == 1:
        return runs[0].report, runs
    return macro_average([r.report for r in runs], name), runs


def output_dir(cfg: RunConfig, override: str | Path | None = None) -> Path:
    return Path(override) if override is not None else cfg.path(cfg.output_dir)
