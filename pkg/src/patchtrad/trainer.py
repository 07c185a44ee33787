"""Mini-batch Adam training on the patch-wise reconstruction loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, DataError, TrainingError
from .ingest import Normalizer, TimeSeries
from .model import ModelConfig, ModelState, forward, init_model
from .tensorcore import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    window_stride: int = 1
    grad_clip: float | None = None
    recalibrate_bn: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.window_stride < 1:
            raise ConfigError(f"window_stride must be >= 1, got {self.window_stride}")
        b1, b2 = self.adam_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"adam_betas must lie in [0, 1), got {self.adam_betas}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be > 0 when set, got {self.grad_clip}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


def training_loss(x_p: Tensor, recon: Tensor) -> Tensor:
    """Sum of squared errors over modalities, patches and patch positions."""
    return tc.sum_squared_error(x_p, recon)


def per_patch_errors(x_p, recon) -> np.ndarray:
    """Squared error of each patch summed over modalities: shape ``(..., P_num)``."""
    xp = x_p.data if isinstance(x_p, Tensor) else np.asarray(x_p)
    rc = recon.data if isinstance(recon, Tensor) else np.asarray(recon)
    d = xp.astype(np.float64) - rc.astype(np.float64)
    return (d * d).sum(axis=(-3, -1))


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> AdamState:
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()})


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params.values())))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params.values():
            p.grad = p.grad * p.grad.dtype.type(factor)
    return total


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place."""
    missing = [k for k, p in params.items() if p.grad is None]
    if missing:
        raise TrainingError(f"no gradient for parameters {missing}")
    b1, b2 = cfg.adam_betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in params.items():
        g = p.grad
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        p.data -= update.astype(p.dtype, copy=False)
        if not np.all(np.isfinite(p.data)):
            raise TrainingError(f"parameter {k} became non-finite at step {state.step}")


def make_windows(values: np.ndarray, window_w: int, stride: int = 1) -> np.ndarray:
    """All ``(M, w+1)`` windows of a ``(T, M)`` series at the given stride: ``(N, M, w+1)``."""
    values = np.asarray(values)
    t = values.shape[0]
    if t < window_w + 1:
        raise DataError(f"series of length {t} is shorter than one window (w + 1 = {window_w + 1})")
    view = np.lib.stride_tricks.sliding_window_view(values, window_w + 1, axis=0)  # (T-w, M, w+1)
    return view[::stride]


def mean_window_loss(state: ModelState, windows: np.ndarray, batch_size: int = 256) -> float:
    """Eval-mode average per-window training loss, without recording gradients."""
    total = 0.0
    with tc.no_grad():
        for i in range(0, len(windows), batch_size):
            x_p, recon = forward(windows[i:i + batch_size], state, training=False)
            total += float(per_patch_errors(x_p, recon).sum())
    return total / len(windows)


def recalibrate_batchnorm(state: ModelState, windows: np.ndarray, batch_size: int = 256) -> None:
    """Replace running statistics by their average over all windows at the current weights.

    Momentum statistics trail the weights during training; this pass makes
    eval-mode normalization match the final model.
    """
    probe = replace(state, cfg=replace(state.cfg, dropout_p=0.0))
    for stats in state.bn_stats.values():
        stats.reset()
        stats.momentum = None
    try:
        with tc.no_grad():
            for i in range(0, len(windows), batch_size):
                forward(windows[i:i + batch_size], probe, training=True)
    finally:
        for stats in state.bn_stats.values():
            stats.momentum = 0.1


@dataclass
class TrainResult:
    state: ModelState
    epoch_losses: list[float]
    train_config: TrainConfig


def train(train_series: TimeSeries | np.ndarray, model_cfg: ModelConfig, train_cfg: TrainConfig,
          normalizer: Normalizer | None = None, dtype=np.float32,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    """Fit a fresh model on every sliding window of an already-normalized series.

    Each mini-batch minimizes the mean over its windows of the per-window
    sum of squared errors. The last ``w`` observations are kept on the state
    as scoring context.
    """
    values = train_series.values if isinstance(train_series, TimeSeries) else np.asarray(train_series, float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] != model_cfg.n_modalities:
        raise DataError(f"model expects M={model_cfg.n_modalities} modalities, series has {values.shape[1]}")
    windows = make_windows(values.astype(dtype), model_cfg.patch.window_w, train_cfg.window_stride)

    init_seed, shuffle_seed, dropout_seed = np.random.SeedSequence(train_cfg.seed).spawn(3)
    state = init_model(model_cfg, seed=int(init_seed.generate_state(1)[0]), dtype=dtype)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    opt = AdamState.for_params(state.params)

    losses: list[float] = []
    n = len(windows)
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for i in range(0, n, train_cfg.batch_size):
            xb = windows[order[i:i + train_cfg.batch_size]]
            state.zero_grad()
            x_p, recon = forward(xb, state, training=True, rng=dropout_rng)
            loss = tc.scale(training_loss(x_p, recon), 1.0 / len(xb))
            loss.backward()
            if train_cfg.grad_clip is not None:
                clip_gradients(state.params, train_cfg.grad_clip)
            adam_step(state.params, opt, train_cfg)
            total += loss.item() * len(xb)
        losses.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, train_cfg.epochs, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])

    state.zero_grad()
    if train_cfg.recalibrate_bn:
        recalibrate_batchnorm(state, windows, train_cfg.batch_size)
    state.context = np.array(values[-model_cfg.patch.window_w:], dtype=dtype)
    state.normalizer = normalizer
    return TrainResult(state, losses, train_cfg)
