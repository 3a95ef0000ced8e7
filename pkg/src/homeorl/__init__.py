"""Multi-agent homeostatic reinforcement learning with empathy coupling."""

from homeorl.drives import (
    AFFECTIVE,
    COGNITIVE,
    CONDITIONS,
    FULL,
    NONE,
    EmpathyCondition,
    PreferenceDist,
    couple_drives,
    drive_categorical,
    drive_quadratic,
    homeostatic_reward,
)

__version__ = "0.1.0"

__all__ = [
    "AFFECTIVE",
    "COGNITIVE",
    "CONDITIONS",
    "FULL",
    "NONE",
    "EmpathyCondition",
    "PreferenceDist",
    "couple_drives",
    "drive_categorical",
    "drive_quadratic",
    "homeostatic_reward",
]
