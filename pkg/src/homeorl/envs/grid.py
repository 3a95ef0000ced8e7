"""Five-cell corridor: a mobile Possessor shuttles food to a fixed Partner.

Cell 0 is next to the Partner, cell 4 is the food source. Energies are
continuous with a quadratic drive around zero; both drift down by
``drift`` every step and an ingestion adds ``intake``. The episode fails as
soon as either energy leaves [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homeorl.drives import (
    NONE,
    EmpathyCondition,
    couple_drives,
    drive_quadratic,
    get_condition,
    homeostatic_reward,
)
from homeorl.envs.base import EpisodeOverError, StepResult, make_rng

LEFT, RIGHT, EAT, GET, PASS = range(5)
ACTION_NAMES = ("LEFT", "RIGHT", "EAT", "GET", "PASS")

# Tolerance on the viability bounds so accumulated float drift landing on
# exactly -1.0 counts as inside.
BOUND_EPS = 1e-9


@dataclass
class GridState:
    possessor_pos: int = 0
    has_food: bool = False
    possessor_energy: float = 0.0
    partner_energy: float = 0.0
    t: int = 0


class GridEnv:
    n_actions = 5
    n_learners = 1
    n_cells = 5
    action_names = ACTION_NAMES

    def __init__(
        self,
        condition: EmpathyCondition | str = NONE,
        drift: float = 0.003,
        intake: float = 0.1,
        max_steps: int = 2000,
        beta: float = 100.0,
        seed=None,
    ):
        self.condition = get_condition(condition)
        self.drift = drift
        self.intake = intake
        self.max_steps = max_steps
        self.beta = beta
        self.rng = make_rng(seed)
        self.state: GridState | None = None
        self._over = True

    @property
    def obs_dim(self) -> int:
        return self.n_cells + 2 + 1 + int(self.condition.observe_partner)

    def drive(self, state: GridState | None = None) -> float:
        s = self.state if state is None else state
        return couple_drives(
            drive_quadratic(s.possessor_energy), drive_quadratic(s.partner_energy), self.condition
        )

    def reset(self, seed=None) -> np.ndarray:
        # Start state is deterministic; the seed only matters for API parity.
        if seed is not None:
            self.rng = make_rng(seed)
        self.state = GridState()
        self._over = False
        return self.observe()

    def set_state(self, state: GridState) -> np.ndarray:
        self.state = state
        self._over = False
        return self.observe()

    def observe(self, cond: EmpathyCondition | None = None) -> np.ndarray:
        cond = self.condition if cond is None else get_condition(cond)
        s = self.state
        obs = np.zeros(self.n_cells + 2 + 1 + int(cond.observe_partner))
        obs[s.possessor_pos] = 1.0
        obs[self.n_cells + int(s.has_food)] = 1.0
        obs[self.n_cells + 2] = s.possessor_energy
        if cond.observe_partner:
            obs[-1] = s.partner_energy
        return obs

    def step(self, action: int) -> StepResult:
        if self._over or self.state is None:
            raise EpisodeOverError("episode is over; call reset() first")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid grid action {action!r}")
        s = self.state
        d_prev = self.drive()
        possessor_intake = partner_intake = 0.0
        partner_energy_at_intake = None
        acted = False

        if action == LEFT:
            s.possessor_pos = max(0, s.possessor_pos - 1)
        elif action == RIGHT:
            s.possessor_pos = min(self.n_cells - 1, s.possessor_pos + 1)
        elif action == GET:
            if s.possessor_pos == self.n_cells - 1 and not s.has_food:
                s.has_food = True
                acted = True
        elif action == EAT:
            if s.has_food:
                s.has_food = False
                possessor_intake = self.intake
                acted = True
        elif action == PASS:
            if s.possessor_pos == 0 and s.has_food:
                s.has_food = False
                partner_intake = self.intake
                partner_energy_at_intake = s.partner_energy
                acted = True

        s.possessor_energy = s.possessor_energy - self.drift + possessor_intake
        s.partner_energy = s.partner_energy - self.drift + partner_intake
        s.t += 1

        reward = homeostatic_reward(d_prev, self.drive(), self.beta)
        terminated = not (
            -1.0 - BOUND_EPS <= s.possessor_energy <= 1.0 + BOUND_EPS
            and -1.0 - BOUND_EPS <= s.partner_energy <= 1.0 + BOUND_EPS
        )
        truncated = not terminated and s.t >= self.max_steps
        self._over = terminated or truncated
        info = {
            "action": ACTION_NAMES[action],
            "effective": acted,
            "partner_fed": partner_intake > 0,
            "partner_energy_at_intake": partner_energy_at_intake,
            "possessor_energy": s.possessor_energy,
            "partner_energy": s.partner_energy,
            "d_possessor": drive_quadratic(s.possessor_energy),
            "d_partner": drive_quadratic(s.partner_energy),
            "t": s.t,
        }
        return StepResult(self.observe(), np.array([reward]), terminated, truncated, info)

    def snapshot(self) -> dict:
        s = self.state
        return {
            "t": s.t,
            "possessor_pos": s.possessor_pos,
            "has_food": int(s.has_food),
            "possessor_energy": s.possessor_energy,
            "partner_energy": s.partner_energy,
        }
