"""Two-agent food-sharing task with binary energy states.

Only the Possessor acts. Each step runs, in order: stochastic decay of every
High agent, the action effect (EAT feeds the Possessor, PASS feeds the
Partner), Low-step counter updates, the drive-difference reward, and the
failure / step-cap checks. Decay before the action means EAT always leaves
the Possessor High while PASS exposes it to decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homeorl.drives import (
    NONE,
    BinaryEnergy,
    EmpathyCondition,
    PreferenceDist,
    couple_drives,
    drive_categorical,
    get_condition,
    homeostatic_reward,
)
from homeorl.envs.base import EpisodeOverError, StepResult, make_rng

EAT = 0
PASS = 1
ACTION_NAMES = ("EAT", "PASS")

HIGH = BinaryEnergy.HIGH
LOW = BinaryEnergy.LOW


@dataclass(frozen=True)
class FoodShareState:
    possessor_energy: BinaryEnergy
    partner_energy: BinaryEnergy
    possessor_low_steps: int = 0
    partner_low_steps: int = 0
    t: int = 0

    def __post_init__(self):
        # accept plain 0/1 as well as BinaryEnergy members
        object.__setattr__(self, "possessor_energy", BinaryEnergy(self.possessor_energy))
        object.__setattr__(self, "partner_energy", BinaryEnergy(self.partner_energy))


class FoodShareEnv:
    n_actions = 2
    n_learners = 1
    action_names = ACTION_NAMES

    def __init__(
        self,
        condition: EmpathyCondition | str = NONE,
        decay_p: float = 0.1,
        low_limit: int = 10,
        max_steps: int = 2000,
        beta: float = 1.0,
        pref: PreferenceDist = PreferenceDist(),
        seed=None,
    ):
        self.condition = get_condition(condition)
        self.decay_p = decay_p
        self.low_limit = low_limit
        self.max_steps = max_steps
        self.beta = beta
        self.pref = pref
        # drives only depend on the two binary energies, so tabulate them once
        self._own = {e: drive_categorical(e, pref) for e in (HIGH, LOW)}
        self._coupled = {
            (p, q): couple_drives(self._own[p], self._own[q], self.condition)
            for p in (HIGH, LOW) for q in (HIGH, LOW)
        }
        self.rng = make_rng(seed)
        self.state: FoodShareState | None = None
        self._over = True

    @property
    def obs_dim(self) -> int:
        return 2 if self.condition.observe_partner else 1

    def drive(self, state: FoodShareState | None = None) -> float:
        s = self.state if state is None else state
        return self._coupled[s.possessor_energy, s.partner_energy]

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = make_rng(seed)
        u = self.rng.random(2)
        self.state = FoodShareState(
            possessor_energy=HIGH if u[0] < 0.5 else LOW,
            partner_energy=HIGH if u[1] < 0.5 else LOW,
        )
        self._over = False
        return self.observe()

    def set_state(self, state: FoodShareState) -> np.ndarray:
        self.state = state
        self._over = False
        return self.observe()

    def observe(self, cond: EmpathyCondition | None = None) -> np.ndarray:
        cond = self.condition if cond is None else get_condition(cond)
        s = self.state
        if cond.observe_partner:
            return np.array([s.possessor_energy.encode(), s.partner_energy.encode()])
        return np.array([s.possessor_energy.encode()])

    def step(self, action: int) -> StepResult:
        if self._over or self.state is None:
            raise EpisodeOverError("episode is over; call reset() first")
        if action not in (EAT, PASS):
            raise ValueError(f"invalid food-share action {action!r}")
        s = self.state
        d_prev = self.drive(s)

        u = self.rng.random(2)
        pos = s.possessor_energy
        par = s.partner_energy
        if pos == HIGH and u[0] < self.decay_p:
            pos = LOW
        if par == HIGH and u[1] < self.decay_p:
            par = LOW
        partner_was_low = par == LOW
        if action == EAT:
            pos = HIGH
        else:
            par = HIGH

        pos_low = 0 if pos == HIGH else s.possessor_low_steps + 1
        par_low = 0 if par == HIGH else s.partner_low_steps + 1
        self.state = FoodShareState(pos, par, pos_low, par_low, s.t + 1)

        reward = homeostatic_reward(d_prev, self.drive(), self.beta)
        terminated = pos_low >= self.low_limit or par_low >= self.low_limit
        truncated = not terminated and self.state.t >= self.max_steps
        self._over = terminated or truncated
        info = {
            "action": ACTION_NAMES[action],
            # Partner Low at decision time: before PASS could feed it.
            "partner_was_low": s.partner_energy == LOW,
            "partner_low_before_action": partner_was_low,
            "possessor_energy": int(pos),
            "partner_energy": int(par),
            "d_possessor": self._own[pos],
            "d_partner": self._own[par],
            "t": self.state.t,
        }
        return StepResult(self.observe(), np.array([reward]), terminated, truncated, info)

    def snapshot(self) -> dict:
        s = self.state
        return {
            "t": s.t,
            "possessor_energy": int(s.possessor_energy),
            "partner_energy": int(s.partner_energy),
            "possessor_low_steps": s.possessor_low_steps,
            "partner_low_steps": s.partner_low_steps,
        }
