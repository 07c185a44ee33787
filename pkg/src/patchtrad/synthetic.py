"""Seeded synthetic series for smoke runs and end-to-end checks."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .ingest import LabeledTimeSeries, TimeSeries


def multi_sine(length: int, n_modalities: int, seed: int = 0, noise: float = 0.05,
               start: int = 0, periods=(24.0, 50.0, 97.0)) -> np.ndarray:
    """``(length, M)`` sum of sinusoids; each modality gets its own phases and mix.

    ``start`` offsets time so a test split can continue a train split.
    """
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, size=(n_modalities, len(periods)))
    amps = rng.uniform(0.5, 1.5, size=(n_modalities, len(periods)))
    t = np.arange(start, start + length, dtype=np.float64)[:, None]
    out = np.zeros((length, n_modalities))
    for j, period in enumerate(periods):
        out += amps[:, j] * np.sin(2 * np.pi * t / period + phases[:, j])
    noise_rng = np.random.default_rng([seed, start])
    return out + noise * noise_rng.standard_normal(out.shape)


def inject_spikes(values: np.ndarray, n_spikes: int, magnitude: float, sigma,
                  seed: int = 0, min_gap: int = 40, margin: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Add ``+magnitude * sigma[m]`` to one random modality at ``n_spikes`` well-separated indices.

    Returns the corrupted copy and the 0/1 label vector.
    """
    values = np.array(values, dtype=np.float64)
    t, m = values.shape
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (m,))
    rng = np.random.default_rng(seed)
    slack = t - 1 - margin - (n_spikes - 1) * min_gap
    if slack < 0:
        raise ConfigError(f"cannot place {n_spikes} spikes {min_gap} apart in {t - margin} steps")
    offsets = np.sort(rng.integers(0, slack + 1, size=n_spikes))
    chosen = margin + offsets + min_gap * np.arange(n_spikes)
    labels = np.zeros(t, dtype=np.int8)
    for idx in chosen:
        mod = rng.integers(m)
        values[idx, mod] += magnitude * sigma[mod]
        labels[idx] = 1
    return values, labels


def spike_benchmark(train_len: int = 5000, test_len: int = 2000, n_modalities: int = 3,
                    n_spikes: int = 25, magnitude: float = 8.0, seed: int = 0):
    """Clean train split plus a continued test split with labeled spikes."""
    train = multi_sine(train_len, n_modalities, seed=seed)
    test = multi_sine(test_len, n_modalities, seed=seed, start=train_len)
    test, labels = inject_spikes(test, n_spikes, magnitude, train.std(axis=0), seed=seed + 1)
    names = tuple(f"s{i}" for i in range(n_modalities))
    return TimeSeries(train, names), LabeledTimeSeries(test, names, labels)
