"""Drive functions, empathy coupling and the drive-reduction reward.

Every environment computes rewards through this module so that coupling is
always applied to drives first and differenced second. Coupling the rewards
instead would give the same numbers for a fixed weight, but keeping the drive
as the primary quantity is what makes per-episode returns telescope to
``beta * (D_0 - D_T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

# Network-facing encoding of the binary energy labels. Observation layouts
# in every environment depend on these two numbers.
HIGH_VALUE = 1.0
LOW_VALUE = 0.0


class BinaryEnergy(IntEnum):
    LOW = 0
    HIGH = 1

    def encode(self) -> float:
        return HIGH_VALUE if self is BinaryEnergy.HIGH else LOW_VALUE


@dataclass(frozen=True)
class PreferenceDist:
    """Desirability of each binary energy label (the drive is ``-ln P``)."""

    p_high: float = 0.95
    p_low: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.p_high < 1.0 and 0.0 < self.p_low < 1.0):
            raise ValueError(f"preferences must lie in (0, 1): {self}")
        if abs(self.p_high + self.p_low - 1.0) > 1e-12:
            raise ValueError(f"preferences must sum to 1: {self}")

    def __getitem__(self, state: BinaryEnergy) -> float:
        return self.p_high if state == BinaryEnergy.HIGH else self.p_low


@dataclass(frozen=True)
class EmpathyCondition:
    name: str
    observe_partner: bool
    coupling_w: float

    def __post_init__(self):
        if self.coupling_w < 0:
            raise ValueError("coupling weight must be non-negative")


NONE = EmpathyCondition("none", observe_partner=False, coupling_w=0.0)
COGNITIVE = EmpathyCondition("cognitive", observe_partner=True, coupling_w=0.0)
AFFECTIVE = EmpathyCondition("affective", observe_partner=False, coupling_w=0.5)
FULL = EmpathyCondition("full", observe_partner=True, coupling_w=0.5)

CONDITIONS: dict[str, EmpathyCondition] = {
    c.name: c for c in (NONE, COGNITIVE, AFFECTIVE, FULL)
}


def get_condition(name: str | EmpathyCondition) -> EmpathyCondition:
    if isinstance(name, EmpathyCondition):
        return name
    try:
        return CONDITIONS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown empathy condition {name!r}; expected one of {sorted(CONDITIONS)}"
        ) from None


def drive_categorical(state: BinaryEnergy, pref: PreferenceDist = PreferenceDist()) -> float:
    return -math.log(pref[BinaryEnergy(state)])


def drive_quadratic(energy: float) -> float:
    return energy * energy


def couple_drives(d_self: float, d_partner: float, cond: EmpathyCondition) -> float:
    return d_self + cond.coupling_w * d_partner


def homeostatic_reward(d_prev: float, d_next: float, beta: float = 1.0) -> float:
    """Reward for one transition: ``beta * (d_prev - d_next)``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return beta * (d_prev - d_next)
