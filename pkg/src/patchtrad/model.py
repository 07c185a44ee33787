"""Patch-based transformer reconstruction network.

Layout of one forward pass for a batch of windows ``(B, M, w+1)``:

1. patch every modality stream -> ``x_p`` of shape ``(B, M, P_num, P_len)``
2. fold modalities into the batch (channel independence) -> ``(B*M, P_num, P_len)``
3. linear projection ``P_len -> D_model`` plus a fixed sinusoidal position table
4. ``n_layers`` post-norm encoder blocks: multi-head self-attention over the
   patch axis, residual + batchnorm, GELU feed-forward, residual + batchnorm
5. per-modality linear head ``D_model -> P_len`` producing the reconstruction

Projections, attention and head matrices carry no bias; the feed-forward
sub-block does.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, DimensionError
from .ingest import Normalizer
from .patcher import PatchConfig, patchify_array
from .tensorcore import RunningStats, Tensor

ATTN_SCALES = ("d_model", "d_k")


@dataclass(frozen=True)
class ModelConfig:
    patch: PatchConfig
    n_modalities: int
    d_model: int = 64
    n_heads: int = 4
    d_k: int | None = None
    d_v: int | None = None
    n_layers: int = 3
    ffn_mult: int = 2
    dropout_p: float = 0.1
    attn_scale: str = "d_model"

    def __post_init__(self):
        if self.n_modalities < 1:
            raise ConfigError(f"n_modalities must be >= 1, got {self.n_modalities}")
        if self.d_model < 1 or self.n_heads < 1 or self.n_layers < 1:
            raise ConfigError("d_model, n_heads and n_layers must all be >= 1")
        if self.ffn_mult < 1:
            raise ConfigError(f"ffn_mult must be >= 1, got {self.ffn_mult}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.attn_scale not in ATTN_SCALES:
            raise ConfigError(f"attn_scale must be one of {ATTN_SCALES}, got {self.attn_scale!r}")
        for name in ("d_k", "d_v"):
            value = getattr(self, name)
            if value is None:
                if self.d_model % self.n_heads:
                    raise ConfigError(
                        f"{name} defaults to d_model / n_heads, but {self.d_model} is not divisible by {self.n_heads}")
                object.__setattr__(self, name, self.d_model // self.n_heads)
            elif value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")

    @property
    def num_patches(self) -> int:
        return self.patch.num_patches

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        d = dict(d)
        d["patch"] = PatchConfig(**d["patch"])
        return cls(**d)


def sinusoidal_encoding(n_positions: int, d_model: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((n_positions, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe.astype(dtype)


@dataclass
class ModelState:
    """Learnable parameters plus every fixed buffer needed to score.

    ``params`` maps names to leaf tensors with ``requires_grad=True``;
    ``w_pe`` is a plain array the optimizer never sees.
    """

    cfg: ModelConfig
    params: dict[str, Tensor]
    w_pe: np.ndarray
    bn_stats: dict[str, RunningStats]
    normalizer: Normalizer | None = None
    context: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dtype(self) -> np.dtype:
        return self.w_pe.dtype

    def head_weights(self) -> list[Tensor]:
        return [self.params[f"head.{m}"] for m in range(self.cfg.n_modalities)]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every learnable tensor, in canonical order."""
    d, h = cfg.d_model, cfg.n_heads
    hidden = cfg.ffn_mult * d
    shapes: dict[str, tuple[int, ...]] = {"w_proj": (cfg.patch.patch_len, d)}
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes[p + "w_q"] = (d, h * cfg.d_k)
        shapes[p + "w_k"] = (d, h * cfg.d_k)
        shapes[p + "w_v"] = (d, h * cfg.d_v)
        shapes[p + "w_out"] = (h * cfg.d_v, d)
        shapes[p + "bn1.gamma"] = (d,)
        shapes[p + "bn1.beta"] = (d,)
        shapes[p + "ffn.w1"] = (d, hidden)
        shapes[p + "ffn.b1"] = (hidden,)
        shapes[p + "ffn.w2"] = (hidden, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "bn2.gamma"] = (d,)
        shapes[p + "bn2.beta"] = (d,)
    for m in range(cfg.n_modalities):
        shapes[f"head.{m}"] = (d, cfg.patch.patch_len)
    return shapes


def bn_names(cfg: ModelConfig) -> list[str]:
    return [f"layers.{i}.bn{j}" for i in range(cfg.n_layers) for j in (1, 2)]


def init_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelState:
    """Uniform init with bound ``1/sqrt(fan_in)``; batchnorm starts at gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".gamma"):
            value = np.ones(shape)
        elif name.endswith(".beta"):
            value = np.zeros(shape)
        else:
            if len(shape) == 2:
                fan_in = shape[0]
            else:  # feed-forward bias: fan_in of the matrix it follows
                fan_in = cfg.d_model if name.endswith("b1") else cfg.ffn_mult * cfg.d_model
            bound = 1.0 / math.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(value, requires_grad=True, dtype=dtype)
    stats = {name: RunningStats(cfg.d_model, dtype=dtype) for name in bn_names(cfg)}
    w_pe = sinusoidal_encoding(cfg.num_patches, cfg.d_model, dtype=dtype)
    return ModelState(cfg, params, w_pe, stats)


def embed(x_p: Tensor, state: ModelState) -> Tensor:
    """``x_p @ W_proj + W_pe`` for ``x_p`` of shape ``(..., P_num, P_len)``."""
    cfg = state.cfg
    if x_p.shape[-2:] != (cfg.num_patches, cfg.patch.patch_len):
        raise DimensionError(
            f"embed: expected trailing dims {(cfg.num_patches, cfg.patch.patch_len)}, got {x_p.shape}")
    return tc.add(tc.matmul(x_p, state.params["w_proj"]), Tensor(state.w_pe, dtype=state.dtype))


def self_attention(x: Tensor, state: ModelState, layer: int, trace: dict | None = None) -> Tensor:
    """Multi-head attention over the patch axis of ``(N, P, D)`` tokens, projected back to ``D``."""
    cfg = state.cfg
    p = state.params
    pre = f"layers.{layer}."
    n, n_p, _ = x.shape
    h, dk, dv = cfg.n_heads, cfg.d_k, cfg.d_v

    def heads(t: Tensor, width: int) -> Tensor:
        return tc.transpose(tc.reshape(t, (n, n_p, h, width)), (0, 2, 1, 3))

    q = heads(tc.matmul(x, p[pre + "w_q"]), dk)
    k = heads(tc.matmul(x, p[pre + "w_k"]), dk)
    v = heads(tc.matmul(x, p[pre + "w_v"]), dv)
    denom = math.sqrt(cfg.d_model if cfg.attn_scale == "d_model" else dk)
    scores = tc.softmax_lastdim(tc.scale(tc.bmm(q, tc.transpose(k, (0, 1, 3, 2))), 1.0 / denom))
    if trace is not None:
        trace[f"scores.{layer}"] = scores.data
    ctx = tc.bmm(scores, v)
    ctx = tc.reshape(tc.transpose(ctx, (0, 2, 1, 3)), (n, n_p, h * dv))
    return tc.matmul(ctx, p[pre + "w_out"])


def attention_layer(x: Tensor, state: ModelState, layer: int, training: bool,
                    rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    """One post-norm encoder block on ``(N, P, D)`` tokens."""
    p = state.params
    pre = f"layers.{layer}."
    drop = state.cfg.dropout_p
    a = tc.dropout(self_attention(x, state, layer, trace), drop, training, rng)
    x = tc.batchnorm(tc.residual_add(x, a), p[pre + "bn1.gamma"], p[pre + "bn1.beta"],
                     state.bn_stats[pre + "bn1"], training)
    f = tc.add(tc.matmul(x, p[pre + "ffn.w1"]), p[pre + "ffn.b1"])
    f = tc.dropout(tc.gelu(f), drop, training, rng)
    f = tc.add(tc.matmul(f, p[pre + "ffn.w2"]), p[pre + "ffn.b2"])
    f = tc.dropout(f, drop, training, rng)
    x = tc.batchnorm(tc.residual_add(x, f), p[pre + "bn2.gamma"], p[pre + "bn2.beta"],
                     state.bn_stats[pre + "bn2"], training)
    return x


def patch_head(z: Tensor, state: ModelState) -> Tensor:
    """Apply modality ``m``'s own ``D_model -> P_len`` matrix to ``z[..., m, :, :]``.

    ``z`` has shape ``(B, M, P_num, D_model)``.
    """
    cfg = state.cfg
    if z.ndim != 4 or z.shape[1] != cfg.n_modalities:
        raise DimensionError(f"patch_head: expected (B, {cfg.n_modalities}, P, D), got {z.shape}")
    b, m, n_p, d = z.shape
    w = tc.stack(state.head_weights(), axis=0)                      # (M, D, L)
    zm = tc.reshape(tc.transpose(z, (1, 0, 2, 3)), (m, b * n_p, d))  # (M, B*P, D)
    out = tc.bmm(zm, w)                                              # (M, B*P, L)
    return tc.transpose(tc.reshape(out, (m, b, n_p, cfg.patch.patch_len)), (1, 0, 2, 3))


def forward(window, state: ModelState, training: bool = False,
            rng: np.random.Generator | None = None, trace: dict | None = None) -> tuple[Tensor, Tensor]:
    """Return ``(x_p, reconstruction)`` for one ``(M, w+1)`` window or a ``(B, M, w+1)`` batch."""
    cfg = state.cfg
    arr = window.data if isinstance(window, Tensor) else np.asarray(window)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (cfg.n_modalities, cfg.patch.window_len):
        raise DimensionError(
            f"forward: expected (B, {cfg.n_modalities}, {cfg.patch.window_len}) windows, got {arr.shape}")
    b, m = arr.shape[:2]
    x_p = Tensor(patchify_array(arr, cfg.patch), dtype=state.dtype)
    tokens = tc.reshape(x_p, (b * m, cfg.num_patches, cfg.patch.patch_len))
    x = embed(tokens, state)
    for i in range(cfg.n_layers):
        x = attention_layer(x, state, i, training, rng, trace)
    z = tc.reshape(x, (b, m, cfg.num_patches, cfg.d_model))
    recon = patch_head(z, state)
    if single:
        x_p = tc.reshape(x_p, x_p.shape[1:])
        recon = tc.reshape(recon, recon.shape[1:])
    return x_p, recon
