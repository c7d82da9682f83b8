from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np


@dataclass
class FitReport:
    """Outcome of a multi-restart fit.

    ``iterations`` counts gradient iterations (mixed model) or sweeps
    (discrete model) of the best restart. ``trace`` is that restart's
    objective after every iteration/sweep.
    """

    final_loglik: float
    iterations: int
    restarts_run: int
    best_restart_index: int
    seed: int
    wall_time_seconds: float = 0.0
    stall_triggered: bool = False
    final_objective: Optional[float] = None
    trace: list[float] = field(default_factory=list)
    restart_scores: list[Optional[float]] = field(default_factory=list)
    aborted_restarts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.restarts_run < 1:
            raise ValueError("restarts_run must be >= 1")
        if not 0 <= self.best_restart_index < self.restarts_run:
            raise ValueError("best_restart_index out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, (np.floating, np.integer)):
                d[k] = v.item()
        return d


def restart_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Seed for restart/run ``index`` derived from the master ``seed``.

    ``SeedSequence([seed, index])`` hashes both words, so every restart gets an
    independent stream regardless of how restarts are scheduled.
    """
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])
