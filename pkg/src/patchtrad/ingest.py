"""CSV ingestion, train-statistics normalization and sub-dataset manifests."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """``T x M`` observation matrix (rows are time steps)."""

    values: np.ndarray
    modality_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"time series needs shape (T >= 1, M >= 1), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("time series contains missing or non-finite values")
        names = tuple(self.modality_names) or tuple(f"x{i}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DataError(f"{len(names)} modality names for {values.shape[1]} columns")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "modality_names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.T


@dataclass(frozen=True)
class LabeledTimeSeries(TimeSeries):
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        labels = np.asarray(self.labels)
        if labels.shape != (self.T,):
            raise DataError(f"label length {labels.shape} does not match T={self.T}")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return self.T - self.n_pos


def load_csv(path, label_column: str | None = None,
             ignore_columns: Sequence[str] = ()) -> TimeSeries | LabeledTimeSeries:
    """Read a headerful CSV; every column except the label and ignored ones is a float modality."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        missing = [c for c in ignore_columns if c not in header]
        if missing:
            raise DataError(f"{path}: ignored columns {missing} not in header")
        skip = set(ignore_columns) | ({label_column} if label_column else set())
        value_idx = [i for i, h in enumerate(header) if h not in skip]
        if not value_idx:
            raise DataError(f"{path}: no value columns")
        label_idx = header.index(label_column) if label_column else None
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
            vals = []
            for i in value_idx:
                try:
                    v = float(row[i])
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {header[i]!r}: unparseable value {row[i]!r}")
                vals.append(v)
            rows.append(vals)
            if label_idx is not None:
                cell = row[label_idx].strip()
                try:
                    lab = float(cell)
                except ValueError:
                    lab = math.nan
                if lab not in (0.0, 1.0):
                    raise DataError(f"{path}: row {lineno}, column {label_column!r}: label {cell!r} not in {{0, 1}}")
                labels.append(int(lab))
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = tuple(header[i] for i in value_idx)
    if label_column is None:
        return TimeSeries(np.array(rows), names)
    return LabeledTimeSeries(np.array(rows), names, np.array(labels))


def write_csv(path, series: TimeSeries, label_column: str = "label") -> None:
    """Write a series in the format :func:`load_csv` reads."""
    path = Path(path)
    labeled = isinstance(series, LabeledTimeSeries)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(series.modality_names) + ([label_column] if labeled else []))
        for t in range(series.T):
            row = [repr(float(v)) for v in series.values[t]]
            if labeled:
                row.append(int(series.labels[t]))
            w.writerow(row)


@dataclass(frozen=True)
class Normalizer:
    """Per-modality z-score statistics fitted on a training split.

    Population standard deviation; zero-variance modalities get std 1 and
    are flagged, so they normalize to zero.
    """

    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray

    def apply(self, series: TimeSeries) -> TimeSeries:
        if series.M != self.mean.shape[0]:
            raise DataError(f"normalizer fitted on M={self.mean.shape[0]} modalities, series has M={series.M}")
        return replace(series, values=(series.values - self.mean) / self.std)

    def invert(self, series: TimeSeries) -> TimeSeries:
        return replace(series, values=series.values * self.std + self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "zero_variance": self.zero_variance.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Normalizer:
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   np.array(d["zero_variance"], dtype=bool))


def fit_normalizer(train: TimeSeries) -> Normalizer:
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    zero = std == 0.0
    std = np.where(zero, 1.0, std)
    return Normalizer(_frozen(mean), _frozen(std), _frozen(zero))


def apply_normalizer(series: TimeSeries, norm: Normalizer) -> TimeSeries:
    return norm.apply(series)


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    train_csv: Path
    test_csv: Path
    label_column: str = "label"
    ignore_columns: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...]


_ENTRY_KEYS = {"name", "train_csv", "test_csv", "label_column", "ignore_columns"}


def resolve_manifest(manifest_path) -> DatasetManifest:
    """Parse a YAML manifest; relative paths resolve against the manifest's directory.

    Every missing file is reported in one error.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = yaml.safe_load(manifest_path.read_text())
    except OSError as exc:
        raise DataError(f"{manifest_path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise DataError(f"{manifest_path}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict) or not doc.get("entries"):
        raise DataError(f"{manifest_path}: manifest needs a non-empty 'entries' list")
    base = manifest_path.parent
    entries, problems = [], []
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict):
            problems.append(f"entry {i}: not a mapping")
            continue
        unknown = set(raw) - _ENTRY_KEYS
        if unknown:
            problems.append(f"entry {i}: unknown keys {sorted(unknown)}")
        name = str(raw.get("name", f"entry{i}"))
        paths = {}
        for key in ("train_csv", "test_csv"):
            if key not in raw:
                problems.append(f"entry {name!r}: missing {key}")
                continue
            p = Path(raw[key])
            p = p if p.is_absolute() else base / p
            if not p.is_file():
                problems.append(f"entry {name!r}: {key} not found: {p}")
            paths[key] = p
        if len(paths) == 2:
            entries.append(ManifestEntry(name, paths["train_csv"], paths["test_csv"],
                                         str(raw.get("label_column", "label")),
                                         tuple(raw.get("ignore_columns", ()))))
    if problems:
        raise DataError(f"{manifest_path}: " + "; ".join(problems))
    return DatasetManifest(str(doc.get("name", manifest_path.stem)), tuple(entries))
