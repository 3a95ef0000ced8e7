"""Test runs of trained policies and the behavioural metrics behind the figures.

Every metric is computed from trajectory rows, which are also what gets
written to disk, so any summary can be rebuilt from the CSVs alone.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from homeorl.envs import make_env
from homeorl.nn.network import PolicyParams, RecurrentState, forward, sample_action


class PolicyRunner:
    """Drives one environment with a stochastic policy, resetting on episode end."""

    def __init__(self, env, params: PolicyParams, rng: np.random.Generator):
        self.env = env
        self.params = params
        self.rng = rng
        self.n = env.n_learners
        self.episode = -1
        self._new_episode()

    def _new_episode(self):
        self.obs = np.atleast_2d(self.env.reset())
        self.state = RecurrentState.zeros(self.n, self.params.lstm_dim)
        self.episode += 1

    def step(self):
        _, probs, _, self.state = forward(self.obs, self.state, self.params)
        actions, _ = sample_action(probs, self.rng)
        before = self.env.snapshot()
        res = self.env.step(int(actions[0]) if self.n == 1 else actions)
        episode = self.episode
        if res.done:
            self._new_episode()
        else:
            self.obs = np.atleast_2d(res.observation)
        return before, actions, res, episode


def _row(env_id: str, step: int, episode: int, before: dict, actions, res) -> dict:
    info = res.info
    row = {"step": step, "episode": episode, "t": info["t"]}
    if env_id == "foodshare":
        row.update({
            "possessor_before": before["possessor_energy"],
            "partner_before": before["partner_energy"],
            "action": info["action"],
            "possessor_energy": info["possessor_energy"],
            "partner_energy": info["partner_energy"],
            "reward": float(res.rewards[0]),
        })
    elif env_id == "grid":
        intake = info["partner_energy_at_intake"]
        row.update({
            "possessor_pos": before["possessor_pos"],
            "has_food": before["has_food"],
            "action": info["action"],
            "effective": int(info["effective"]),
            "partner_fed": int(info["partner_fed"]),
            "partner_energy_at_intake": "" if intake is None else repr(intake),
            "possessor_energy": info["possessor_energy"],
            "partner_energy": info["partner_energy"],
            "d_possessor": info["d_possessor"],
            "d_partner": info["d_partner"],
            "reward": float(res.rewards[0]),
        })
    else:
        row.update({k: v for k, v in before.items() if k != "t"})
        for i in (0, 1):
            row[f"a{i}_action"] = info["actions"][i]
            row[f"a{i}_energy_after"] = info["energies"][i]
            row[f"a{i}_movable_after"] = int(info["movable"][i])
            row[f"a{i}_received_food"] = int(info["received_food"][i])
            row[f"a{i}_ate"] = int(info["ate"][i])
            row[f"a{i}_accident"] = int(info["accidents"][i])
            row[f"a{i}_reward"] = float(res.rewards[i])
    row["terminated"] = int(res.terminated)
    row["done"] = int(res.done)
    return row


def record_test_run(env_id: str, condition: str, params: PolicyParams, n_steps: int,
                    seed, env_params: dict | None = None) -> list[dict]:
    """Continuous test run of ``n_steps`` env steps (episodes restart on failure)."""
    rng = np.random.default_rng(seed)
    env = make_env(env_id, condition, seed=rng, **(env_params or {}))
    runner = PolicyRunner(env, params, rng)
    rows = []
    for step in range(n_steps):
        before, actions, res, episode = runner.step()
        rows.append(_row(env_id, step, episode, before, actions, res))
    return rows


def episode_durations(env_id: str, condition: str, params: PolicyParams, n_episodes: int,
                      seed, env_params: dict | None = None) -> list[int]:
    rng = np.random.default_rng(seed)
    env = make_env(env_id, condition, seed=rng, **(env_params or {}))
    runner = PolicyRunner(env, params, rng)
    lengths = []
    while len(lengths) < n_episodes:
        _, _, res, _ = runner.step()
        if res.done:
            lengths.append(res.info["t"])
    return lengths


def foodshare_metrics(rows: list[dict]) -> dict:
    n = len(rows)
    passes = sum(r["action"] == "PASS" for r in rows)
    pass_low = sum(r["action"] == "PASS" and int(r["partner_before"]) == 0 for r in rows)
    partner_low = sum(int(r["partner_energy"]) == 0 for r in rows)
    return {
        "test_steps": n,
        "pass_rate": passes / n,
        "pass_when_partner_low": pass_low,
        "partner_low_rate": partner_low / n,
    }


def grid_metrics(rows: list[dict], bins: int = 20, histogram_rows: list[dict] | None = None) -> dict:
    d_pos = np.array([float(r["d_possessor"]) for r in rows])
    d_par = np.array([float(r["d_partner"]) for r in rows])
    hist_src = rows if histogram_rows is None else histogram_rows
    intakes = [float(r["partner_energy_at_intake"]) for r in hist_src if r["partner_energy_at_intake"] != ""]
    counts, edges = np.histogram(intakes, bins=bins, range=(-1.0, 1.0))
    return {
        "test_steps": len(rows),
        "mean_d_possessor": float(d_pos.mean()),
        "mean_d_partner": float(d_par.mean()),
        "var_d_partner": float(d_par.var()),
        "pass_rate": float(np.mean([int(r["partner_fed"]) for r in rows])),
        "partner_intakes": len(intakes),
        "intake_histogram": counts.tolist(),
        "intake_bin_edges": edges.tolist(),
    }


def find_rescues(rows: list[dict]) -> list[dict]:
    """Episodes where an immobile agent was handed food and later moved again.

    Returns one record per rescue: the agent, the step it received food and
    the step its movable flag came back.
    """
    rescues = []
    pending: dict[tuple[int, int], int] = {}
    for r in rows:
        ep = int(r["episode"])
        for i in (0, 1):
            key = (ep, i)
            if int(r[f"a{i}_received_food"]) and not int(r[f"a{i}_movable"]):
                pending.setdefault(key, int(r["step"]))
            if key in pending and int(r[f"a{i}_movable_after"]):
                rescues.append({"episode": ep, "agent": i, "fed_step": pending.pop(key),
                                "restored_step": int(r["step"])})
        if int(r["done"]):
            for i in (0, 1):
                pending.pop((ep, i), None)
    return rescues


def field_metrics(rows: list[dict]) -> dict:
    d = np.array([[float(r[f"a{i}_energy_after"]) ** 2 for i in (0, 1)] for r in rows])
    rescues = find_rescues(rows)
    return {
        "test_steps": len(rows),
        "mean_d_agent0": float(d[:, 0].mean()),
        "mean_d_agent1": float(d[:, 1].mean()),
        "passes": int(sum(int(r["a0_received_food"]) + int(r["a1_received_food"]) for r in rows)),
        "accidents": int(sum(int(r["a0_accident"]) + int(r["a1_accident"]) for r in rows)),
        "rescues": len(rescues),
    }


def behavior_metrics(env_id: str, rows: list[dict], **kwargs) -> dict:
    if env_id == "foodshare":
        return foodshare_metrics(rows)
    if env_id == "grid":
        return grid_metrics(rows, **kwargs)
    return field_metrics(rows)


def write_rows(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
