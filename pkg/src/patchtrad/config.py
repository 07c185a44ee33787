"""Run configuration: one YAML file per experiment, with dotted overrides.

Example::

    dataset:
      train_csv: data/train.csv
      test_csv: data/test.csv
      label_column: label
      window: 32
    patch: {patch_len: 8, stride: 6}
    model: {d_model: 64, n_heads: 4, n_layers: 3}
    train: {epochs: 10, batch_size: 128, seed: 0}

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .model import ModelConfig
from .patcher import PatchConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class DatasetSection:
    name: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    manifest: str | None = None
    label_column: str = "label"
    ignore_columns: tuple[str, ...] = ()
    window: int = 32


@dataclass(frozen=True)
class PatchSection:
    patch_len: int = 8
    stride: int = 6


@dataclass(frozen=True)
class ModelSection:
    d_model: int = 64
    n_heads: int = 4
    d_k: int | None = None
    d_v: int | None = None
    n_layers: int = 3
    ffn_mult: int = 2
    dropout: float = 0.1
    attn_scale: str = "d_model"


@dataclass(frozen=True)
class ScoreSection:
    batch_size: int = 256


@dataclass(frozen=True)
class BenchSection:
    window_sizes: tuple[int, ...] = (32, 64, 100, 128, 200)
    batch_size: int = 128
    warmup: int = 5
    iters: int = 30
    n_modalities: int | None = None


@dataclass(frozen=True)
class AblateSection:
    grid: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    patch: PatchSection = field(default_factory=PatchSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    score: ScoreSection = field(default_factory=ScoreSection)
    bench: BenchSection = field(default_factory=BenchSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    output_dir: str = "runs"
    base_dir: str = "."

    def patch_config(self, patch_len: int | None = None, stride: int | None = None,
                     window: int | None = None) -> PatchConfig:
        return PatchConfig(window if window is not None else self.dataset.window,
                           patch_len if patch_len is not None else self.patch.patch_len,
                           stride if stride is not None else self.patch.stride)

    def model_config(self, n_modalities: int, patch: PatchConfig | None = None) -> ModelConfig:
        m = self.model
        return ModelConfig(patch or self.patch_config(), n_modalities, d_model=m.d_model,
                           n_heads=m.n_heads, d_k=m.d_k, d_v=m.d_v, n_layers=m.n_layers,
                           ffn_mult=m.ffn_mult, dropout_p=m.dropout, attn_scale=m.attn_scale)

    def path(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self, need_data: bool = True) -> RunConfig:
        """Check every section's invariants; raises :class:`ConfigError`."""
        self.model_config(1)
        for w in self.bench.window_sizes:
            self.patch_config(window=int(w))
        if self.score.batch_size < 1 or self.bench.batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.bench.iters < 1 or self.bench.warmup < 0:
            raise ConfigError("bench.iters must be >= 1 and bench.warmup >= 0")
        if need_data:
            d = self.dataset
            if d.manifest is None and (d.train_csv is None or d.test_csv is None):
                raise ConfigError("dataset needs either 'manifest' or both 'train_csv' and 'test_csv'")
            if d.manifest is not None and (d.train_csv or d.test_csv):
                raise ConfigError("dataset: give 'manifest' or 'train_csv'/'test_csv', not both")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


_SECTIONS = {"dataset": DatasetSection, "patch": PatchSection, "model": ModelSection,
             "train": TrainConfig, "score": ScoreSection, "bench": BenchSection, "ablate": AblateSection}
_TUPLE_FIELDS = {"ignore_columns", "window_sizes", "adam_betas"}


def _build_section(name: str, cls, raw: Any):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {unknown}")
    kwargs = {}
    for k, v in raw.items():
        if k in _TUPLE_FIELDS and v is not None:
            v = tuple(v)
        elif k == "grid" and v is not None:
            v = tuple(tuple(int(x) for x in cell) for cell in v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError:
        parsed = value
    return key.strip().split("."), parsed


def from_dict(doc: dict, overrides=(), base_dir: str | Path = ".") -> RunConfig:
    doc = dict(doc or {})
    for text in overrides:
        keys, value = parse_override(text)
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {k!r} is not a section")
        node[keys[-1]] = value
    unknown = sorted(set(doc) - set(_SECTIONS) - {"output_dir"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    sections = {name: _build_section(name, cls, doc.get(name)) for name, cls in _SECTIONS.items()}
    return RunConfig(**sections, output_dir=str(doc.get("output_dir", "runs")), base_dir=str(base_dir))


def load_config(path, overrides=()) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(doc, overrides, base_dir=path.parent)
