"""Patch length / stride sweep: one independently trained model per grid cell."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, Sequence

from .config import RunConfig
from .errors import ConfigError
from .patcher import PatchConfig
from .pipeline import run_dataset

log = logging.getLogger(__name__)

# (patch_len, stride) rows of the reference ablation table, in its order
DEFAULT_GRID: tuple[tuple[int, int], ...] = (
    (3, 3), (5, 3), (5, 5), (6, 6), (8, 3), (8, 5), (8, 6), (8, 8),
    (16, 12), (16, 16), (28, 22), (28, 28), (32, 28), (32, 32),
)


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``"8:6,3:3"`` -> ``[(8, 6), (3, 3)]``."""
    cells = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            p_len, stride = (int(x) for x in part.split(":"))
        except ValueError:
            raise ConfigError(f"grid cell {part!r} is not of the form P_LEN:STRIDE") from None
        cells.append((p_len, stride))
    if not cells:
        raise ConfigError("empty ablation grid")
    return cells


def run_ablation(cfg: RunConfig, grid: Sequence[tuple[int, int]] | None = None,
                 evaluate_cell: Callable[[RunConfig, PatchConfig], float] | None = None) -> list[dict]:
    """Rows ``{p_len, stride, auc, status}`` in grid order.

    Invalid cells produce a ``skipped`` row with the reason instead of
    aborting the sweep.
    """
    if evaluate_cell is None:
        def evaluate_cell(c: RunConfig, patch: PatchConfig) -> float:
            return run_dataset(c, patch)[0].auc

    rows = []
    for p_len, stride in (grid if grid is not None else cfg.ablate.grid or DEFAULT_GRID):
        try:
            patch = cfg.patch_config(p_len, stride)
        except ConfigError as exc:
            log.warning("skipping cell (%d, %d): %s", p_len, stride, exc)
            rows.append({"p_len": p_len, "stride": stride, "auc": None, "status": f"skipped: {exc}"})
            continue
        auc = evaluate_cell(cfg, patch)
        rows.append({"p_len": p_len, "stride": stride, "auc": auc, "status": "ok"})
    return rows


def write_ablation(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_len", "stride", "auc", "status"])
        for r in rows:
            w.writerow([r["p_len"], r["stride"], "" if r["auc"] is None else f"{r['auc']:.6f}", r["status"]])
    return path
