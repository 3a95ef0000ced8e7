"""Two symmetric agents foraging on the unit square.

Both agents move, pick up the single food item, eat it or hand it over.
An agent whose energy sinks below ``immobile_below`` can no longer move but
may still eat, so a carried-and-passed food item is its only way back.
While both agents are mobile each one independently suffers an accident with
probability ``accident_p`` per step, which drops its energy to
``immobile_below`` at once.

Actions are resolved simultaneously in stages (movement, GET, EAT, PASS),
each stage seeing the flags left by the previous one. Two agents reaching for
the same food in one step: the closer one wins, exact ties go to a coin flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homeorl.drives import NONE, EmpathyCondition, drive_quadratic, get_condition, homeostatic_reward
from homeorl.envs.base import EpisodeOverError, StepResult, make_rng

UP, DOWN, LEFT, RIGHT, GET, EAT, PASS = range(7)
ACTION_NAMES = ("UP", "DOWN", "LEFT", "RIGHT", "GET", "EAT", "PASS")
_MOVES = {
    UP: np.array([0.0, 1.0]),
    DOWN: np.array([0.0, -1.0]),
    LEFT: np.array([-1.0, 0.0]),
    RIGHT: np.array([1.0, 0.0]),
}
BOUND_EPS = 1e-9


@dataclass
class AgentState:
    position: np.ndarray
    energy: float = 0.0
    has_food: bool = False
    movable: bool = True


@dataclass
class Field2DState:
    agents: list[AgentState]
    food_position: np.ndarray
    food_present: bool = True
    t: int = 0

    def copy(self) -> "Field2DState":
        return Field2DState(
            [AgentState(a.position.copy(), a.energy, a.has_food, a.movable) for a in self.agents],
            self.food_position.copy(),
            self.food_present,
            self.t,
        )


class Field2DEnv:
    n_actions = 7
    n_learners = 2
    action_names = ACTION_NAMES

    def __init__(
        self,
        condition: EmpathyCondition | str = NONE,
        drift: float = 0.001,
        intake: float = 0.3,
        step_size: float = 0.05,
        radius: float = 0.1,
        immobile_below: float = -0.7,
        accident_p: float = 0.0005,
        max_steps: int = 2000,
        beta: float = 100.0,
        seed=None,
    ):
        self.condition = get_condition(condition)
        self.drift = drift
        self.intake = intake
        self.step_size = step_size
        self.radius = radius
        self.immobile_below = immobile_below
        self.accident_p = accident_p
        self.max_steps = max_steps
        self.beta = beta
        self.rng = make_rng(seed)
        self.state: Field2DState | None = None
        self._over = True

    @property
    def obs_dim(self) -> int:
        return 9 + int(self.condition.observe_partner)

    def drives(self, state: Field2DState | None = None) -> np.ndarray:
        s = self.state if state is None else state
        own = np.array([drive_quadratic(a.energy) for a in s.agents])
        return own + self.condition.coupling_w * own[::-1]

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = make_rng(seed)
        pts = self.rng.random((3, 2))
        self.state = Field2DState(
            agents=[AgentState(pts[0]), AgentState(pts[1])],
            food_position=pts[2],
        )
        self._over = False
        return self.observe_all()

    def set_state(self, state: Field2DState) -> np.ndarray:
        self.state = state
        self._over = False
        return self.observe_all()

    def observe(self, agent_index: int, cond: EmpathyCondition | None = None) -> np.ndarray:
        cond = self.condition if cond is None else get_condition(cond)
        s = self.state
        me = s.agents[agent_index]
        obs = np.zeros(9 + int(cond.observe_partner))
        obs[0:2] = me.position
        obs[2:4] = s.food_position
        obs[4 + int(me.has_food)] = 1.0
        obs[6 + int(me.movable)] = 1.0
        obs[8] = me.energy
        if cond.observe_partner:
            obs[9] = s.agents[1 - agent_index].energy
        return obs

    def observe_all(self) -> np.ndarray:
        return np.stack([self.observe(0), self.observe(1)])

    def _near(self, p: np.ndarray, q: np.ndarray) -> bool:
        return float(np.hypot(*(p - q))) <= self.radius

    def step(self, actions) -> StepResult:
        if self._over or self.state is None:
            raise EpisodeOverError("episode is over; call reset() first")
        actions = [int(a) for a in actions]
        if len(actions) != 2 or not all(0 <= a < self.n_actions for a in actions):
            raise ValueError(f"expected two actions in [0, 7), got {actions!r}")
        s = self.state
        agents = s.agents
        d_prev = self.drives()
        intake = [0.0, 0.0]
        fed_by_partner = [False, False]

        for a, act in zip(agents, actions):
            if act in _MOVES and a.movable:
                a.position = np.clip(a.position + self.step_size * _MOVES[act], 0.0, 1.0)

        takers = [
            i for i in (0, 1)
            if actions[i] == GET and s.food_present and not agents[i].has_food
            and self._near(agents[i].position, s.food_position)
        ]
        if len(takers) == 2:
            d0 = np.hypot(*(agents[0].position - s.food_position))
            d1 = np.hypot(*(agents[1].position - s.food_position))
            if d0 == d1:
                takers = [int(self.rng.random() < 0.5)]
            else:
                takers = [0 if d0 < d1 else 1]
        for i in takers:
            agents[i].has_food = True
            s.food_present = False

        for i in (0, 1):
            if actions[i] == EAT and agents[i].has_food:
                agents[i].has_food = False
                intake[i] = self.intake

        givers = [
            i for i in (0, 1)
            if actions[i] == PASS and agents[i].has_food and not agents[1 - i].has_food
            and self._near(agents[i].position, agents[1 - i].position)
        ]
        for i in givers:
            agents[i].has_food = False
            agents[1 - i].has_food = True
            fed_by_partner[1 - i] = True

        was_movable = [a.movable for a in agents]
        for i, a in enumerate(agents):
            a.energy = a.energy - self.drift + intake[i]
            a.movable = a.energy > self.immobile_below
        accidents = [False, False]
        if all(a.movable for a in agents):
            u = self.rng.random(2)
            for i, a in enumerate(agents):
                if u[i] < self.accident_p:
                    a.energy = self.immobile_below
                    a.movable = False
                    accidents[i] = True

        if not s.food_present:
            s.food_position = self.rng.random(2)
            s.food_present = True
        s.t += 1

        d_next = self.drives()
        rewards = np.array([homeostatic_reward(d_prev[i], d_next[i], self.beta) for i in (0, 1)])
        terminated = any(not (-1.0 - BOUND_EPS <= a.energy <= 1.0 + BOUND_EPS) for a in agents)
        truncated = not terminated and s.t >= self.max_steps
        self._over = terminated or truncated
        info = {
            "actions": [ACTION_NAMES[a] for a in actions],
            "accidents": accidents,
            "received_food": fed_by_partner,
            "ate": [x > 0 for x in intake],
            "was_movable": was_movable,
            "movable": [a.movable for a in agents],
            "energies": [a.energy for a in agents],
            "t": s.t,
        }
        return StepResult(self.observe_all(), rewards, terminated, truncated, info)

    def snapshot(self) -> dict:
        s = self.state
        row = {"t": s.t, "food_x": s.food_position[0], "food_y": s.food_position[1]}
        for i, a in enumerate(s.agents):
            row.update({
                f"a{i}_x": a.position[0],
                f"a{i}_y": a.position[1],
                f"a{i}_energy": a.energy,
                f"a{i}_has_food": int(a.has_food),
                f"a{i}_movable": int(a.movable),
            })
        return row
