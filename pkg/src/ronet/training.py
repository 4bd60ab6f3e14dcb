"""Pieces shared by the training loops: schedules, per-step seeds, progress logs."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optim import LRSchedule


@dataclass(frozen=True)
class TrainSchedule:
    updates: int
    batch: int
    patch: int
    lr: LRSchedule = field(default_factory=LRSchedule)
    seed: int = 0
    log_every: int = 1


def step_seed(seed: int, step: int, stream: int = 0) -> int:
    """Independent 64-bit seed for one step of one random stream."""
    return int(np.random.SeedSequence([seed, stream, step]).generate_state(1, dtype=np.uint64)[0])


class ProgressLog:
    """Append-only ``step,loss,lr,wall_ms`` rows, kept in memory and optionally streamed to CSV."""

    FIELDS = ("step", "loss", "lr", "wall_ms")

    def __init__(self, path: str | Path | None = None):
        self.rows: list[tuple[int, float, float, float]] = []
        self.path = Path(path) if path else None
        self._t0 = time.perf_counter()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(self.FIELDS)

    def record(self, step: int, loss: float, lr: float) -> None:
        row = (step, float(loss), float(lr), (time.perf_counter() - self._t0) * 1e3)
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow([row[0], repr(row[1]), repr(row[2]), f"{row[3]:.1f}"])

    @property
    def losses(self) -> list[float]:
        return [r[1] for r in self.rows]
