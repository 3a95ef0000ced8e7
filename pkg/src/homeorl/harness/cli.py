"""Command-line entry point: ``homeorl train|eval|oracle|plot``."""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

OUTPUT_ENV = "HOMEORL_OUTPUT"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_src", required=True,
              help="YAML file or preset name (foodshare, grid, field2d, field2d_desk, smoke).")
@click.option("--seeds", type=int, default=None, help="Number of seeds (default: from config).")
@click.option("--conditions", default=None, help="Comma-separated subset of empathy conditions.")
@click.option("--total-timesteps", type=int, default=None, help="Override the step budget per seed.")
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help=f"Output directory (default: ${OUTPUT_ENV}/<name>).")
@click.option("--jobs", type=int, default=1, show_default=True, help="Seeds trained in parallel.")
def train(config_src, seeds, conditions, total_timesteps, output, jobs):
    """Train every condition x seed and write metrics, curves and checkpoints."""
    from homeorl.harness.config import load_config
    from homeorl.harness.train import run_training

    cfg = load_config(config_src)
    if conditions:
        cfg.conditions = [c.strip() for c in conditions.split(",") if c.strip()]
        cfg.__post_init__()
    if total_timesteps:
        cfg.ppo.total_timesteps = total_timesteps
    out = output or output_root() / cfg.name
    t0 = time.perf_counter()
    summaries = run_training(cfg, out, n_seeds=seeds, jobs=jobs)
    for cond, rows in summaries.items():
        durations = [r["mean_eval_duration"] for r in rows]
        click.echo(f"{cond:>10}: final eval duration {np.mean(durations):8.1f} "
                   f"(seeds: {', '.join(f'{d:.0f}' for d in durations)})")
    click.echo(f"wrote {out} in {time.perf_counter() - t0:.1f}s")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_src", default=None, help="Check the checkpoint against this config.")
@click.option("--test-steps", type=int, default=None, help="Length of the continuous test run.")
@click.option("--episodes", type=int, default=None, help="Episodes for the duration estimate.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help="Directory for test_run.csv and eval.json (default: next to the checkpoint).")
def evaluate(checkpoint, config_src, test_steps, episodes, seed, output):
    """Test-run a checkpoint and print its behavioural metrics as JSON."""
    from homeorl.harness.config import ExperimentConfig, load_config
    from homeorl.harness.train import evaluate_seed
    from homeorl.nn.network import init_params, load_checkpoint

    _, meta = load_checkpoint(checkpoint)
    info = meta["extra"]
    cfg = load_config(config_src) if config_src else ExperimentConfig.from_dict(meta["config"])
    if cfg.env != info["env"]:
        raise click.ClickException(f"checkpoint is for env {info['env']!r}, config says {cfg.env!r}")
    from homeorl.envs import make_env

    env = make_env(cfg.env, info["condition"], **cfg.env_params)
    expected = init_params(env.obs_dim, env.n_actions, cfg.hidden_dim, cfg.lstm_dim, 0).shapes()
    try:
        params, _ = load_checkpoint(checkpoint, expected_shapes=expected)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    if test_steps:
        cfg.eval.test_steps = test_steps
    if episodes:
        cfg.eval.eval_episodes = episodes
    cfg.base_seed = seed
    out = output or Path(checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    metrics = evaluate_seed(cfg, info["condition"], info["seed"], params, out)
    click.echo(json.dumps(metrics, indent=2, sort_keys=True))


@main.command()
@click.option("--condition", required=True, help="none, cognitive, affective or full.")
@click.option("--gamma", type=float, default=0.99, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--all-states", is_flag=True, help="Also list unreachable counter combinations.")
def oracle(condition, gamma, tol, all_states):
    """Solve the food-sharing MDP exactly; print the policy as CSV plus a check line."""
    from homeorl.drives import get_condition
    from homeorl.oracle import (
        build_mdp,
        never_pass,
        pass_optimal_when_partner_low,
        policy_table,
        value_iteration,
    )

    try:
        cond = get_condition(condition)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--condition") from exc
    t0 = time.perf_counter()
    solved = value_iteration(build_mdp(cond), gamma=gamma, tol=tol)
    elapsed = time.perf_counter() - t0
    rows = policy_table(solved)
    if not all_states:
        rows = [r for r in rows if r["reachable"]]
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
    if cond.coupling_w == 0:
        ok = never_pass(solved)
        claim = "EAT optimal in every non-absorbing state"
    else:
        ok = len(pass_optimal_when_partner_low(solved)) > 0
        claim = "PASS optimal in at least one partner-Low state"
    click.echo(f"# {'PASS' if ok else 'FAIL'}: {cond.name}: {claim} "
               f"(iterations={solved.iterations}, residual={solved.residual:.2e}, {elapsed:.3f}s)")
    if not ok:
        sys.exit(1)


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="Experiment directory written by `train`.")
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help="Figure directory (default: <input>/figures).")
def plot(input_dir, output):
    """Render learning-curve and behaviour figures (SVG) from metrics CSVs."""
    from homeorl.harness.plots import MetricsError, emit_plots

    try:
        paths = emit_plots(input_dir, output)
    except MetricsError as exc:
        raise click.ClickException(str(exc)) from exc
    for p in paths:
        click.echo(str(p))


if __name__ == "__main__":
    main()
