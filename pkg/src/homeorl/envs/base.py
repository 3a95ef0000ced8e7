from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np


class EpisodeOverError(RuntimeError):
    """Raised when ``step`` is called on an episode that already ended."""


@dataclass
class StepResult:
    """Outcome of one environment transition.

    ``observation`` is a single vector for one-learner environments and a
    ``(n_agents, obs_dim)`` array for the two-agent field. ``rewards`` always
    has one entry per learning agent. ``terminated`` marks failure (an agent
    left its viable range), ``truncated`` marks the step cap.
    """

    observation: np.ndarray
    rewards: np.ndarray
    terminated: bool
    truncated: bool = False
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def write_trajectory_csv(path: str | Path, rows: Iterable[dict[str, Any]]) -> Path:
    rows = list(rows)
    if not rows:
        raise ValueError("no trajectory rows to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path
