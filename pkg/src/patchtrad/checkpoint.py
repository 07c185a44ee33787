"""Binary checkpoint format.

Layout::

    b"PTAD"                     magic
    u32 LE                      format version
    u32 LE                      metadata length in bytes
    metadata                    UTF-8 JSON: configs, normalizer, tensor manifest
    payload                     float32 LE tensors, concatenated in manifest order

Everything the scorer needs (weights, positional table, batchnorm running
statistics, normalizer, train-tail context) travels in one file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptCheckpointError, DimensionError, UnsupportedFormatError
from .ingest import Normalizer
from .model import ModelConfig, ModelState, bn_names, param_shapes
from .tensorcore import RunningStats, Tensor

MAGIC = b"PTAD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_PAYLOAD_DTYPE = np.dtype("<f4")


def _named_tensors(state: ModelState) -> dict[str, np.ndarray]:
    out = {name: p.data for name, p in state.params.items()}
    out["w_pe"] = state.w_pe
    for name, stats in state.bn_stats.items():
        out[f"{name}.running_mean"] = stats.mean
        out[f"{name}.running_var"] = stats.var
    if state.context is not None:
        out["context"] = state.context
    return out


def save_checkpoint(state: ModelState, path, train_config: dict | None = None) -> Path:
    path = Path(path)
    tensors = _named_tensors(state)
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()]
    meta = {
        "model_config": state.cfg.to_dict(),
        "train_config": train_config,
        "normalizer": state.normalizer.to_dict() if state.normalizer is not None else None,
        "extra": state.extra,
        "tensors": manifest,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype=_PAYLOAD_DTYPE).tobytes())
    return path


def read_metadata(path) -> dict:
    meta, _ = _read(Path(path))
    return meta


def _read(path: Path) -> tuple[dict, memoryview]:
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise UnsupportedFormatError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    if len(raw) < _HEADER.size:
        raise CorruptCheckpointError(f"{path}: truncated header")
    _, version, meta_len = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise UnsupportedFormatError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    end = _HEADER.size + meta_len
    if len(raw) < end:
        raise CorruptCheckpointError(f"{path}: truncated metadata ({len(raw) - _HEADER.size} of {meta_len} bytes)")
    try:
        meta = json.loads(raw[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable metadata: {exc}") from None
    return meta, memoryview(raw)[end:]


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> ModelState:
    """Read a checkpoint; optionally insist it matches ``expected_config``.

    Raises :class:`UnsupportedFormatError` for a foreign file or version,
    :class:`CorruptCheckpointError` for truncation, and
    :class:`DimensionError` when tensor shapes disagree with the config.
    """
    path = Path(path)
    meta, payload = _read(path)
    try:
        cfg = ModelConfig.from_dict(meta["model_config"])
        manifest = [(t["name"], tuple(t["shape"])) for t in meta["tensors"]]
    except (KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: incomplete metadata ({exc})") from None

    want = dict(param_shapes(cfg))
    want["w_pe"] = (cfg.num_patches, cfg.d_model)
    for name in bn_names(cfg):
        want[f"{name}.running_mean"] = (cfg.d_model,)
        want[f"{name}.running_var"] = (cfg.d_model,)
    if expected_config is not None and expected_config != cfg:
        exp = dict(param_shapes(expected_config))
        bad = sorted(k for k in set(exp) | set(want) if exp.get(k) != want.get(k))
        if bad:
            raise DimensionError(f"{path}: checkpoint shapes differ from the expected config for {bad}")
        raise ConfigError(f"{path}: checkpoint config {cfg} differs from expected {expected_config}")

    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in manifest:
        n = int(np.prod(shape, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize
        if offset + n > len(payload):
            raise CorruptCheckpointError(f"{path}: truncated payload at tensor {name!r}")
        tensors[name] = np.frombuffer(payload[offset:offset + n], dtype=_PAYLOAD_DTYPE).reshape(shape).astype(np.float32)
        offset += n
    if offset != len(payload):
        raise CorruptCheckpointError(f"{path}: {len(payload) - offset} trailing bytes after payload")

    for name, shape in want.items():
        if name not in tensors:
            raise CorruptCheckpointError(f"{path}: tensor {name!r} missing from manifest")
        if tensors[name].shape != shape:
            raise DimensionError(f"{path}: tensor {name!r} has shape {tensors[name].shape}, config implies {shape}")

    params = {k: Tensor(tensors[k], requires_grad=True, dtype=np.float32) for k in param_shapes(cfg)}
    stats = {}
    for name in bn_names(cfg):
        rs = RunningStats(cfg.d_model)
        rs.mean = tensors[f"{name}.running_mean"]
        rs.var = tensors[f"{name}.running_var"]
        stats[name] = rs
    norm = Normalizer.from_dict(meta["normalizer"]) if meta.get("normalizer") else None
    return ModelState(cfg, params, tensors["w_pe"], stats, norm, tensors.get("context"),
                      dict(meta.get("extra") or {}))
