"""Per-seed PPO training runs, learning curves and seed aggregation.

Layout of one experiment's output::

    <out>/<condition>/seed<k>/episodes.csv      raw finished episodes
    <out>/<condition>/seed<k>/train.csv         per-iteration losses
    <out>/<condition>/seed<k>/checkpoint.npz    final weights
    <out>/<condition>/seed<k>/test_run.csv      evaluation trajectory
    <out>/<condition>/seed<k>/eval.json         evaluation metrics
    <out>/<condition>/seed<k>/timing.json       training wall time
    <out>/<condition>/learning_curve.csv        mean and 95% CI across seeds
    <out>/<condition>/summary.csv               per-seed final metrics
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from homeorl.envs import make_env
from homeorl.harness.config import ExperimentConfig, dump_config
from homeorl.harness.evaluate import behavior_metrics, episode_durations, read_rows, record_test_run, write_rows
from homeorl.nn.network import init_params, save_checkpoint
from homeorl.ppo import Adam, RolloutCollector, compute_gae, ppo_update

log = logging.getLogger(__name__)

TRAIN_FIELDS = ["iteration", "timestep", "episodes", "mean_episode_duration", "policy_loss",
                "value_loss", "entropy", "clip_fraction", "approx_kl", "grad_norm"]
EPISODE_FIELDS = ["timestep", "worker", "length", "terminated"]
CURVE_FIELDS = ["timestep", "mean", "ci_low", "ci_high", "n_seeds"]


def seed_rng(cfg: ExperimentConfig, seed: int) -> np.random.Generator:
    return np.random.default_rng([cfg.base_seed, seed])


def _write_csv(path: Path, fields: list[str], rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def train_seed(cfg: ExperimentConfig, condition: str, seed: int, out_dir: Path) -> dict:
    """Train one policy; writes episode/iteration CSVs and the checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ppo = cfg.ppo
    rng = seed_rng(cfg, seed)
    envs = [make_env(cfg.env, condition, **cfg.env_params) for _ in range(ppo.n_workers)]
    params = init_params(envs[0].obs_dim, envs[0].n_actions, cfg.hidden_dim, cfg.lstm_dim, rng)
    opt = Adam(params, ppo.learning_rate, eps=ppo.adam_eps)
    collector = RolloutCollector(envs, cfg.lstm_dim, rng)
    meta = {"env": cfg.env, "condition": condition, "seed": seed,
            "hidden_dim": cfg.hidden_dim, "lstm_dim": cfg.lstm_dim,
            "obs_dim": envs[0].obs_dim, "n_actions": envs[0].n_actions,
            "env_params": cfg.env_params}

    episodes, train_rows, recent = [], [], []
    started = time.perf_counter()
    for it in range(ppo.n_iterations):
        batch = collector.collect(params, ppo.rollout_steps, rng)
        compute_gae(batch, ppo.gamma, ppo.gae_lambda)
        st = ppo_update(batch, params, ppo, opt, rng)
        finished = collector.pop_finished()
        for e in finished:
            episodes.append({"timestep": e.global_step, "worker": e.worker,
                             "length": e.length, "terminated": int(e.terminated)})
        recent = (recent + [e.length for e in finished])[-cfg.curve_window:]
        train_rows.append({
            "iteration": it,
            "timestep": collector.global_step,
            "episodes": len(finished),
            "mean_episode_duration": float(np.mean(recent)) if recent else "",
            "policy_loss": st.policy_loss,
            "value_loss": st.value_loss,
            "entropy": st.entropy,
            "clip_fraction": st.clip_fraction,
            "approx_kl": st.approx_kl,
            "grad_norm": st.grad_norm,
        })
        if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_{collector.global_step}.npz", params, cfg.to_dict(), meta)
        if it % max(1, ppo.n_iterations // 10) == 0:
            log.info("%s/%s seed %d: step %d, recent duration %s, entropy %.3f",
                     cfg.name, condition, seed, collector.global_step,
                     f"{np.mean(recent):.0f}" if recent else "-", st.entropy)

    elapsed = time.perf_counter() - started
    log.info("%s/%s seed %d trained in %.1fs", cfg.name, condition, seed, elapsed)
    # wall time lives outside the CSVs so those stay bit-for-bit reproducible
    (out_dir / "timing.json").write_text(json.dumps({"train_seconds": elapsed}))
    _write_csv(out_dir / "episodes.csv", EPISODE_FIELDS, episodes)
    _write_csv(out_dir / "train.csv", TRAIN_FIELDS, train_rows)
    ckpt = save_checkpoint(out_dir / "checkpoint.npz", params, cfg.to_dict(), meta)
    return evaluate_seed(cfg, condition, seed, params, out_dir) | {"checkpoint": str(ckpt)}


def evaluate_seed(cfg: ExperimentConfig, condition: str, seed: int, params, out_dir: Path) -> dict:
    ev = cfg.eval
    eval_seed = [cfg.base_seed, seed, 1]
    durations = episode_durations(cfg.env, condition, params, ev.eval_episodes, eval_seed, cfg.env_params)
    rows = record_test_run(cfg.env, condition, params, ev.test_steps, [cfg.base_seed, seed, 2], cfg.env_params)
    write_rows(out_dir / "test_run.csv", rows)
    kwargs = {}
    if cfg.env == "grid":
        hist_rows = record_test_run(cfg.env, condition, params, ev.histogram_steps,
                                    [cfg.base_seed, seed, 3], cfg.env_params)
        write_rows(out_dir / "histogram_run.csv", hist_rows)
        kwargs = {"bins": ev.histogram_bins, "histogram_rows": hist_rows}
    metrics = {
        "condition": condition,
        "seed": seed,
        "eval_durations": durations,
        "mean_eval_duration": float(np.mean(durations)),
        **behavior_metrics(cfg.env, rows, **kwargs),
    }
    (out_dir / "eval.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    return metrics


def _train_job(args):
    cfg, condition, seed, out_dir = args
    return train_seed(cfg, condition, seed, out_dir)


def mean_ci(values, confidence: float = 0.95) -> tuple[float, float, float]:
    """Mean with a Student-t confidence interval (NaN bounds for one value)."""
    x = np.asarray(values, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return m, float("nan"), float("nan")
    half = stats.t.ppf(0.5 + confidence / 2, len(x) - 1) * x.std(ddof=1) / np.sqrt(len(x))
    return m, m - half, m + half


def seed_curve(episode_rows: list[dict], timesteps, window: int) -> np.ndarray:
    """Mean length of the last ``window`` episodes finished by each timestep."""
    ends = np.array([int(r["timestep"]) for r in episode_rows])
    lengths = np.array([float(r["length"]) for r in episode_rows])
    curve = np.full(len(timesteps), np.nan)
    for k, ts in enumerate(timesteps):
        n = int(np.searchsorted(ends, ts, side="right"))
        if n:
            curve[k] = lengths[max(0, n - window):n].mean()
    return curve


def learning_curve(seed_dirs: list[Path], window: int) -> list[dict]:
    """Across-seed curve rebuilt from each seed's ``episodes.csv``."""
    per_seed, grid = [], None
    for d in seed_dirs:
        train = read_rows(Path(d) / "train.csv")
        ts = [int(r["timestep"]) for r in train]
        grid = ts if grid is None else grid
        per_seed.append(seed_curve(read_rows(Path(d) / "episodes.csv"), grid, window))
    rows = []
    mat = np.array(per_seed)
    for k, ts in enumerate(grid or []):
        col = mat[:, k]
        col = col[~np.isnan(col)]
        if len(col) == 0:
            rows.append({"timestep": ts, "mean": "", "ci_low": "", "ci_high": "", "n_seeds": 0})
            continue
        m, lo, hi = mean_ci(col)
        rows.append({"timestep": ts, "mean": m, "ci_low": "" if np.isnan(lo) else lo,
                     "ci_high": "" if np.isnan(hi) else hi, "n_seeds": len(col)})
    return rows


SUMMARY_KEYS = {
    "foodshare": ["mean_eval_duration", "pass_rate", "pass_when_partner_low", "partner_low_rate"],
    "grid": ["mean_eval_duration", "mean_d_possessor", "mean_d_partner", "var_d_partner", "pass_rate"],
    "field2d": ["mean_eval_duration", "mean_d_agent0", "mean_d_agent1", "passes", "accidents", "rescues"],
}


def aggregate_condition(cfg: ExperimentConfig, cond_dir: Path, seeds: list[int]) -> list[dict]:
    seed_dirs = [cond_dir / f"seed{s}" for s in seeds]
    _write_csv(cond_dir / "learning_curve.csv", CURVE_FIELDS, learning_curve(seed_dirs, cfg.curve_window))
    keys = SUMMARY_KEYS[cfg.env]
    rows = []
    for s, d in zip(seeds, seed_dirs):
        m = json.loads((d / "eval.json").read_text())
        rows.append({"seed": s, **{k: m[k] for k in keys}})
    _write_csv(cond_dir / "summary.csv", ["seed"] + keys, rows)
    return rows


def run_training(cfg: ExperimentConfig, out_dir: str | Path, n_seeds: int | None = None,
                 jobs: int = 1) -> dict[str, list[dict]]:
    """Train every condition x seed and write per-condition aggregates.

    Seeds are independent; with ``jobs > 1`` they run in worker processes,
    which changes nothing in the outputs.
    """
    out_dir = Path(out_dir)
    n_seeds = cfg.n_seeds if n_seeds is None else n_seeds
    seeds = list(range(n_seeds))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out_dir / "config.yaml")
    except OSError as exc:
        raise OSError(f"cannot write experiment output under {out_dir}: {exc}") from exc
    jobs_list = [(cfg, c, s, out_dir / c / f"seed{s}") for c in cfg.conditions for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_train_job, jobs_list))
    else:
        for job in jobs_list:
            _train_job(job)
    return {c: aggregate_condition(cfg, out_dir / c, seeds) for c in cfg.conditions}
