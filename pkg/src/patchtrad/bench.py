"""Inference latency measurement and an analytic FLOP count.

Latency is wall-clock time of one eval-mode forward pass over a batch of
random windows (weights are random too; timing does not depend on them).
Warmup iterations are discarded; median and 90th percentile of the rest are
reported in milliseconds.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from . import tensorcore as tc
from .model import ModelConfig, forward, init_model
from .patcher import PatchConfig


def with_window(cfg: ModelConfig, window_w: int) -> ModelConfig:
    return replace(cfg, patch=PatchConfig(window_w, cfg.patch.patch_len, cfg.patch.stride))


def forward_flops(cfg: ModelConfig, batch_size: int = 1) -> int:
    """Approximate floating-point operations of one forward pass (multiply-add = 2)."""
    n = batch_size * cfg.n_modalities
    p, length, d, h = cfg.num_patches, cfg.patch.patch_len, cfg.d_model, cfg.n_heads
    dk, dv, hidden = cfg.d_k, cfg.d_v, cfg.ffn_mult * cfg.d_model
    flops = 2 * n * p * length * d + n * p * d                  # projection + position table
    per_layer = (
        2 * n * p * d * h * (2 * dk + dv)                        # Q, K, V
        + 2 * n * h * p * p * (dk + dv)                          # scores and weighted values
        + 5 * n * h * p * p                                      # softmax
        + 2 * n * p * h * dv * d                                 # output projection
        + 4 * n * p * d * hidden + n * p * (hidden + d)          # feed-forward with biases
        + 10 * n * p * hidden                                    # GELU
        + 2 * (n * p * d + 4 * n * p * d)                        # residuals + batchnorms
    )
    return int(flops + cfg.n_layers * per_layer + 2 * n * p * d * length)


def time_forward(cfg: ModelConfig, batch_size: int = 128, warmup: int = 5, iters: int = 30,
                 seed: int = 0) -> np.ndarray:
    """Per-iteration latencies in milliseconds."""
    state = init_model(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    batch = rng.standard_normal((batch_size, cfg.n_modalities, cfg.patch.window_len)).astype(np.float32)
    times = []
    with tc.no_grad():
        for i in range(warmup + iters):
            t0 = time.perf_counter()
            forward(batch, state, training=False)
            dt = (time.perf_counter() - t0) * 1000.0
            if i >= warmup:
                times.append(dt)
    return np.array(times)


def bench_latency(cfg: ModelConfig, window_sizes, batch_size: int = 128, warmup: int = 5,
                  iters: int = 30, seed: int = 0) -> list[dict]:
    """One row ``{window, median_ms, p90_ms, flops}`` per window size.

    All window sizes are validated before anything is timed.
    """
    configs = [with_window(cfg, int(w)) for w in window_sizes]
    rows = []
    for c in configs:
        lat = time_forward(c, batch_size, warmup, iters, seed)
        rows.append({"window": c.patch.window_w, "median_ms": float(np.median(lat)),
                     "p90_ms": float(np.percentile(lat, 90)), "flops": forward_flops(c, batch_size)})
    return rows
