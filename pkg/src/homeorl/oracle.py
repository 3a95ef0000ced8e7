"""Exact analysis of the food-sharing task as a tabular MDP.

States are ``(possessor, partner, possessor_low_steps, partner_low_steps)``
with counters in ``0..low_limit-1``; a single absorbing state collects every
failure. The step cap is dropped (infinite-horizon discounted abstraction),
and only the coupling weight of the condition matters because the MDP is
fully observed.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from homeorl.drives import (
    BinaryEnergy,
    EmpathyCondition,
    PreferenceDist,
    couple_drives,
    drive_categorical,
    get_condition,
)
from homeorl.envs.foodshare import EAT, PASS, FoodShareEnv, FoodShareState

HIGH, LOW = BinaryEnergy.HIGH, BinaryEnergy.LOW
ACTIONS = (EAT, PASS)
TIE_TOL = 1e-9

StateKey = tuple[int, int, int, int]


@dataclass
class TabularMDP:
    states: list[StateKey]        # non-absorbing states; index len(states) is FAILED
    transitions: list[sp.csr_matrix]  # per action, (S+1, S+1)
    rewards: np.ndarray           # (A, S+1) expected immediate reward
    condition: EmpathyCondition

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def failed(self) -> int:
        return len(self.states)

    def index(self, key: StateKey) -> int:
        return self._index[key]

    def __post_init__(self):
        self._index = {s: i for i, s in enumerate(self.states)}

    def outcomes(self, key: StateKey, action: int):
        """``[(prob, next_index)]`` for one state-action pair."""
        row = self.transitions[action].getrow(self.index(key))
        return list(zip(row.data, row.indices))


@dataclass
class SolvedPolicy:
    actions: np.ndarray     # (S+1,) greedy action per state
    values: np.ndarray      # (S+1,)
    q_values: np.ndarray    # (A, S+1)
    iterations: int
    residual: float
    residuals: list[float]
    mdp: TabularMDP

    def action_for(self, state: FoodShareState) -> int:
        key = (int(state.possessor_energy), int(state.partner_energy),
               state.possessor_low_steps, state.partner_low_steps)
        return int(self.actions[self.mdp.index(key)])


def _outcomes(key: StateKey, action: int, decay_p: float, low_limit: int):
    pe, qe, pc, qc = key
    out = []
    for pd in ((True, False) if pe == HIGH else (False,)):
        ppd = (decay_p if pd else 1.0 - decay_p) if pe == HIGH else 1.0
        for qd in ((True, False) if qe == HIGH else (False,)):
            pqd = (decay_p if qd else 1.0 - decay_p) if qe == HIGH else 1.0
            npe = LOW if (pe == LOW or pd) else HIGH
            nqe = LOW if (qe == LOW or qd) else HIGH
            if action == EAT:
                npe = HIGH
            else:
                nqe = HIGH
            npc = 0 if npe == HIGH else pc + 1
            nqc = 0 if nqe == HIGH else qc + 1
            failed = npc >= low_limit or nqc >= low_limit
            out.append((ppd * pqd, (int(npe), int(nqe), npc, nqc), failed))
    return out


def build_mdp(
    cond: EmpathyCondition | str,
    decay_p: float = 0.1,
    low_limit: int = 10,
    beta: float = 1.0,
    pref: PreferenceDist = PreferenceDist(),
) -> TabularMDP:
    cond = get_condition(cond)
    states = list(itertools.product((int(HIGH), int(LOW)), (int(HIGH), int(LOW)),
                                    range(low_limit), range(low_limit)))
    index = {s: i for i, s in enumerate(states)}
    n = len(states) + 1
    failed = n - 1

    def drive(pe, qe):
        return couple_drives(drive_categorical(pe, pref), drive_categorical(qe, pref), cond)

    mats = []
    rewards = np.zeros((len(ACTIONS), n))
    for a in ACTIONS:
        rows, cols, vals = [failed], [failed], [1.0]
        for s in states:
            i = index[s]
            d0 = drive(s[0], s[1])
            for p, nxt, is_failed in _outcomes(s, a, decay_p, low_limit):
                rows.append(i)
                cols.append(failed if is_failed else index[nxt])
                vals.append(p)
                rewards[a, i] += p * beta * (d0 - drive(nxt[0], nxt[1]))
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    return TabularMDP(states, mats, rewards, cond)


def reachable_states(mdp: TabularMDP) -> set[StateKey]:
    """Breadth-first search from every possible reset state."""
    starts = [(pe, qe, 0, 0) for pe in (int(HIGH), int(LOW)) for qe in (int(HIGH), int(LOW))]
    seen = set(starts)
    queue = deque(starts)
    while queue:
        s = queue.popleft()
        for a in ACTIONS:
            for p, j in mdp.outcomes(s, a):
                if p > 0 and j != mdp.failed:
                    nxt = mdp.states[j]
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
    return seen


def greedy(q: np.ndarray) -> np.ndarray:
    """Greedy action per state; PASS only when strictly better than EAT."""
    return np.where(q[PASS] > q[EAT] + TIE_TOL, PASS, EAT)


def value_iteration(mdp: TabularMDP, gamma: float = 0.99, tol: float = 1e-10,
                    max_iter: int = 100_000) -> SolvedPolicy:
    v = np.zeros(mdp.failed + 1)
    residuals = []
    q = mdp.rewards.copy()
    for it in range(1, max_iter + 1):
        q = np.stack([mdp.rewards[a] + gamma * (mdp.transitions[a] @ v) for a in ACTIONS])
        v_new = q.max(axis=0)
        res = float(np.max(np.abs(v_new - v)))
        residuals.append(res)
        v = v_new
        if res < tol:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps (residual {res:.3e})")
    q = np.stack([mdp.rewards[a] + gamma * (mdp.transitions[a] @ v) for a in ACTIONS])
    return SolvedPolicy(greedy(q), v, q, it, res, residuals, mdp)


def evaluate_policy(mdp: TabularMDP, actions: np.ndarray, gamma: float = 0.99) -> np.ndarray:
    """Exact discounted value of a deterministic policy by a linear solve."""
    n = mdp.failed + 1
    p = sp.lil_matrix((n, n))
    r = np.zeros(n)
    for a in ACTIONS:
        rows = np.flatnonzero(actions == a)
        p[rows] = mdp.transitions[a][rows]
        r[rows] = mdp.rewards[a, rows]
    lhs = sp.identity(n, format="csr") - gamma * p.tocsr()
    return sp.linalg.spsolve(lhs.tocsc(), r)


@dataclass
class PolicyStats:
    mean_duration: float
    pass_rate: float
    failure_rate: float
    mean_discounted_return: float
    n_episodes: int


def simulate_policy(policy, n_episodes: int, rng, cond: EmpathyCondition | str | None = None,
                    max_steps: int = 2000, gamma: float = 0.99, start: FoodShareState | None = None,
                    **env_kwargs) -> PolicyStats:
    """Monte Carlo rollouts of a fixed state-feedback policy in the live env.

    ``policy`` is a :class:`SolvedPolicy` or any callable mapping a
    :class:`FoodShareState` to an action.
    """
    if isinstance(policy, SolvedPolicy):
        cond = policy.mdp.condition if cond is None else cond
        act = policy.action_for
    else:
        act = policy
    rng = np.random.default_rng(rng)
    env = FoodShareEnv(cond if cond is not None else "none", max_steps=max_steps, seed=rng, **env_kwargs)
    lengths, passes, failures, returns = [], 0, 0, []
    total = 0
    for _ in range(n_episodes):
        if start is None:
            env.reset()
        else:
            env.set_state(start)
        g, disc = 0.0, 1.0
        while True:
            a = act(env.state)
            res = env.step(a)
            passes += a == PASS
            total += 1
            g += disc * float(res.rewards[0])
            disc *= gamma
            if res.done:
                lengths.append(res.info["t"])
                failures += res.terminated
                break
        returns.append(g)
    return PolicyStats(float(np.mean(lengths)), passes / total, failures / n_episodes,
                       float(np.mean(returns)), n_episodes)


def eat_only(_state) -> int:
    return EAT


def policy_table(solved: SolvedPolicy) -> list[dict]:
    """Rows for every non-absorbing state, reachable ones flagged."""
    reach = reachable_states(solved.mdp)
    rows = []
    for i, (pe, qe, pc, qc) in enumerate(solved.mdp.states):
        rows.append({
            "possessor": "High" if pe == HIGH else "Low",
            "partner": "High" if qe == HIGH else "Low",
            "possessor_low_steps": pc,
            "partner_low_steps": qc,
            "reachable": int((pe, qe, pc, qc) in reach),
            "action": "PASS" if solved.actions[i] == PASS else "EAT",
            "value": f"{solved.values[i]:.10f}",
            "q_eat": f"{solved.q_values[EAT, i]:.10f}",
            "q_pass": f"{solved.q_values[PASS, i]:.10f}",
        })
    return rows


def never_pass(solved: SolvedPolicy) -> bool:
    return bool(np.all(solved.actions[: solved.mdp.n_states] == EAT))


def pass_optimal_when_partner_low(solved: SolvedPolicy) -> list[StateKey]:
    return [s for i, s in enumerate(solved.mdp.states)
            if s[1] == int(LOW) and solved.actions[i] == PASS]
