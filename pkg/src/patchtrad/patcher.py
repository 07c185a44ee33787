"""Window padding and patch extraction.

A window holds the ``w`` past observations plus the test observation, i.e.
``w + 1`` time steps per modality. Each modality stream is padded by
repeating its last value ``stride`` times, then cut into overlapping
patches of ``patch_len`` values whose starts advance by ``stride``. The last
patch therefore always contains the test observation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensorcore import Tensor


@dataclass(frozen=True)
class PatchConfig:
    window_w: int
    patch_len: int = 8
    stride: int = 6

    def __post_init__(self):
        if self.window_w < 1:
            raise ConfigError(f"window_w must be >= 1, got {self.window_w}")
        if not 1 <= self.patch_len <= self.window_w + 1:
            raise ConfigError(
                f"patch_len must lie in [1, window_w + 1 = {self.window_w + 1}], got {self.patch_len}")
        if not 1 <= self.stride <= self.patch_len:
            raise ConfigError(f"stride must lie in [1, patch_len = {self.patch_len}], got {self.stride}")

    @property
    def window_len(self) -> int:
        return self.window_w + 1

    @property
    def padded_len(self) -> int:
        return self.window_w + 1 + self.stride

    @property
    def num_patches(self) -> int:
        return num_patches(self)


def patch_starts(cfg: PatchConfig) -> list[int]:
    """Start offsets ``0, S, 2S, ...`` of every patch fitting in the padded stream."""
    return list(range(0, cfg.padded_len - cfg.patch_len + 1, cfg.stride))


def num_patches(cfg: PatchConfig) -> int:
    """``floor((w + 1 - P_len) / S) + 2``, cross-checked against the start grid."""
    n = (cfg.window_w + 1 - cfg.patch_len) // cfg.stride + 2
    enumerated = len(patch_starts(cfg))
    if n != enumerated:
        raise ConfigError(f"{cfg}: patch count formula gives {n} but the padded stream holds {enumerated}")
    return n


def pad_stream(window, stride: int) -> np.ndarray:
    """Append ``stride`` copies of the last value along the final axis."""
    window = np.asarray(window)
    if window.shape[-1] == 0:
        raise DimensionError("pad_stream: empty window")
    tail = np.repeat(window[..., -1:], stride, axis=-1)
    return np.concatenate([window, tail], axis=-1)


def patchify_array(windows: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """Patch a ``(..., M, w+1)`` array into ``(..., M, P_num, P_len)``."""
    windows = np.asarray(windows)
    if windows.ndim < 2 or windows.shape[-1] != cfg.window_len:
        raise DimensionError(
            f"patchify: expected (..., M, {cfg.window_len}) for w={cfg.window_w}, got {windows.shape}")
    padded = pad_stream(windows, cfg.stride)
    idx = np.asarray(patch_starts(cfg))[:, None] + np.arange(cfg.patch_len)[None, :]
    return padded[..., idx]


@dataclass
class PatchedWindow:
    data: Tensor
    num_patches: int
    source_end_index: int | None = None


def patchify(window, cfg: PatchConfig, source_end_index: int | None = None) -> PatchedWindow:
    """Patch one ``(M, w+1)`` window; ``source_end_index`` tags the test observation's time index."""
    arr = window.data if isinstance(window, Tensor) else np.asarray(window)
    if arr.ndim != 2:
        raise DimensionError(f"patchify: expected a (M, w+1) window, got shape {arr.shape}")
    patches = patchify_array(arr, cfg)
    return PatchedWindow(Tensor(patches, dtype=arr.dtype if arr.dtype.kind == "f" else None),
                         cfg.num_patches, source_end_index)


def unpatchify(patches: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """Undo patching: rebuild the ``(..., M, w+1)`` window from its patches."""
    patches = np.asarray(patches)
    out = np.empty(patches.shape[:-2] + (cfg.padded_len,), dtype=patches.dtype)
    for i, start in enumerate(patch_starts(cfg)):
        out[..., start:start + cfg.patch_len] = patches[..., i, :]
    return out[..., :cfg.window_len]
