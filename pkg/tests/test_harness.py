import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from homeorl.harness import ExperimentConfig, load_config, run_training
from homeorl.harness.cli import main
from homeorl.harness.config import dump_config
from homeorl.harness.evaluate import (
    find_rescues,
    foodshare_metrics,
    grid_metrics,
    read_rows,
    record_test_run,
)
from homeorl.harness.plots import MetricsError, emit_plots
from homeorl.harness.train import learning_curve, mean_ci, seed_curve
from homeorl.nn import init_params


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    summaries = run_training(load_config("smoke"), out)
    return out, summaries


class TestConfig:
    @pytest.mark.parametrize("name", ["foodshare", "grid", "field2d", "field2d_desk", "smoke"])
    def test_presets_load(self, name):
        cfg = load_config(name)
        assert cfg.name == name
        assert cfg.ppo.total_timesteps > 0

    def test_table_budgets(self):
        assert load_config("foodshare").ppo.total_timesteps == 25_000
        assert load_config("grid").ppo.total_timesteps == 1_000_000
        assert load_config("field2d").ppo.total_timesteps == 20_000_000
        assert load_config("field2d_desk").ppo.total_timesteps == 2_000_000

    def test_round_trip_and_hash(self, tmp_path):
        cfg = load_config("grid")
        path = dump_config(cfg, tmp_path / "g.yaml")
        again = load_config(path)
        assert again.to_dict() == cfg.to_dict()
        assert again.hash() == cfg.hash()
        again.ppo.learning_rate = 5e-4
        assert again.hash() != cfg.hash()

    @pytest.mark.parametrize(
        "data,match",
        [
            ({"env": "maze"}, "env"),
            ({"env": "grid", "bogus": 1}, "unknown config keys"),
            ({"env": "grid", "ppo": {"lr": 1}}, "unknown PPO config keys"),
            ({"env": "grid", "conditions": ["kind"]}, "unknown empathy condition"),
        ],
    )
    def test_invalid(self, data, match):
        with pytest.raises(ValueError, match=match):
            ExperimentConfig.from_dict(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.yaml")


class TestMetrics:
    def test_mean_ci_two_values(self):
        m, lo, hi = mean_ci([0.0, 2.0])
        # t(0.975, df=1) = 12.7062047...
        assert m == 1.0
        assert hi - m == pytest.approx(12.706204736, rel=1e-8)
        assert m - lo == pytest.approx(hi - m)

    def test_mean_ci_single_value(self):
        m, lo, hi = mean_ci([3.0])
        assert m == 3.0 and np.isnan(lo) and np.isnan(hi)

    def test_seed_curve_window(self):
        rows = [{"timestep": t, "length": l} for t, l in [(10, 1), (20, 3), (30, 5), (40, 7)]]
        curve = seed_curve(rows, [5, 20, 40], window=2)
        assert np.isnan(curve[0])
        assert curve[1:].tolist() == [2.0, 6.0]

    def test_random_policy_pass_rate(self):
        params = init_params(1, 2, 16, rng=0)
        rows = record_test_run("foodshare", "none", params, 1000, 0)
        m = foodshare_metrics(rows)
        assert m["test_steps"] == 1000
        assert abs(m["pass_rate"] - 0.5) <= 0.05

    def test_foodshare_counts(self):
        rows = [
            {"action": "PASS", "partner_before": 0, "partner_energy": 1},
            {"action": "PASS", "partner_before": 1, "partner_energy": 1},
            {"action": "EAT", "partner_before": 0, "partner_energy": 0},
            {"action": "EAT", "partner_before": 1, "partner_energy": 1},
        ]
        m = foodshare_metrics(rows)
        assert (m["pass_rate"], m["pass_when_partner_low"], m["partner_low_rate"]) == (0.5, 1, 0.25)

    def test_grid_histogram(self):
        rows = [{"d_possessor": 0.0, "d_partner": x * x, "partner_fed": int(i != ""),
                 "partner_energy_at_intake": i}
                for x, i in [(0.1, "-0.95"), (0.2, ""), (0.3, "0.05"), (0.4, "0.999")]]
        m = grid_metrics(rows, bins=20)
        hist = np.array(m["intake_histogram"])
        assert hist.sum() == 3 and hist[0] == 1 and hist[10] == 1 and hist[19] == 1
        assert m["var_d_partner"] == pytest.approx(np.var([0.01, 0.04, 0.09, 0.16]))

    def test_find_rescues(self):
        base = {"episode": 0, "done": 0, "a1_received_food": 0, "a1_movable": 1, "a1_movable_after": 1}
        rows = [
            {**base, "step": 0, "a0_received_food": 1, "a0_movable": 0, "a0_movable_after": 0},
            {**base, "step": 1, "a0_received_food": 0, "a0_movable": 0, "a0_movable_after": 0},
            {**base, "step": 2, "a0_received_food": 0, "a0_movable": 0, "a0_movable_after": 1},
            {**base, "step": 3, "a0_received_food": 1, "a0_movable": 1, "a0_movable_after": 1},
        ]
        assert find_rescues(rows) == [{"episode": 0, "agent": 0, "fed_step": 0, "restored_step": 2}]

    def test_field_test_run_schema(self):
        params = init_params(9, 7, 8, rng=0)
        rows = record_test_run("field2d", "none", params, 20, 0)
        assert {"a0_x", "a1_movable", "a0_received_food", "a1_accident", "food_x"} <= set(rows[0])


class TestTraining:
    def test_outputs(self, smoke_run):
        out, summaries = smoke_run
        assert set(summaries) == {"none", "affective"}
        for c in summaries:
            for s in (0, 1):
                d = out / c / f"seed{s}"
                for f in ("episodes.csv", "train.csv", "checkpoint.npz", "test_run.csv", "eval.json"):
                    assert (d / f).exists()
                assert len(read_rows(d / "test_run.csv")) == 200
            assert (out / c / "learning_curve.csv").exists()
        assert (out / "config.yaml").exists()

    def test_step_budget(self, smoke_run):
        out, _ = smoke_run
        train = read_rows(out / "none" / "seed0" / "train.csv")
        assert int(train[-1]["timestep"]) == 2048

    def test_learning_curve_rebuilt_from_csv(self, smoke_run):
        out, _ = smoke_run
        rows = learning_curve([out / "none" / "seed0", out / "none" / "seed1"], 16)
        on_disk = read_rows(out / "none" / "learning_curve.csv")
        assert [str(r["timestep"]) for r in rows] == [r["timestep"] for r in on_disk]
        assert [str(r["mean"]) for r in rows] == [r["mean"] for r in on_disk]
        assert max(r["n_seeds"] for r in rows) >= 1

    def test_deterministic(self, smoke_run, tmp_path):
        out, _ = smoke_run
        cfg = load_config("smoke").for_condition("none")
        run_training(cfg, tmp_path, n_seeds=1)
        for f in ("episodes.csv", "train.csv", "test_run.csv"):
            assert (tmp_path / "none" / "seed0" / f).read_bytes() == (out / "none" / "seed0" / f).read_bytes()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="cannot write"):
            run_training(load_config("smoke"), blocker / "sub")


class TestPlots:
    def test_idempotent(self, smoke_run, tmp_path):
        out, _ = smoke_run
        first = emit_plots(out, tmp_path / "a")
        second = emit_plots(out, tmp_path / "b")
        assert len(first) >= 2
        for a, b in zip(first, second):
            assert Path(a).read_bytes() == Path(b).read_bytes()
            assert Path(a).read_text().lstrip().startswith("<?xml")

    def test_empty_input(self, tmp_path):
        with pytest.raises(MetricsError):
            emit_plots(tmp_path)

    def test_malformed_csv(self, smoke_run, tmp_path):
        out, _ = smoke_run
        bad = tmp_path / "exp" / "none"
        bad.mkdir(parents=True)
        (bad / "learning_curve.csv").write_text("timestep,mean\n")
        with pytest.raises(MetricsError):
            emit_plots(tmp_path / "exp")


class TestCli:
    def test_oracle_none(self):
        res = CliRunner().invoke(main, ["oracle", "--condition", "none"])
        assert res.exit_code == 0
        lines = res.output.strip().splitlines()
        assert lines[0].startswith("possessor,partner")
        assert lines[-1].startswith("# PASS: none")
        assert len(lines) == 1 + 22 + 1
        assert all(",PASS," not in line for line in lines[1:-1])

    def test_oracle_affective_all_states(self):
        res = CliRunner().invoke(main, ["oracle", "--condition", "affective", "--all-states"])
        assert res.exit_code == 0
        assert len(res.output.strip().splitlines()) == 402
        assert ",PASS," in res.output

    def test_oracle_bad_condition(self):
        res = CliRunner().invoke(main, ["oracle", "--condition", "kind"])
        assert res.exit_code != 0
        assert "unknown empathy condition" in res.output

    def test_train_eval_plot(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "run"
        res = runner.invoke(main, ["train", "--config", "smoke", "--seeds", "1", "--conditions", "full",
                                   "--total-timesteps", "1024", "--output", str(out)])
        assert res.exit_code == 0, res.output
        assert "full" in res.output
        ckpt = out / "full" / "seed0" / "checkpoint.npz"
        res = runner.invoke(main, ["eval", "--checkpoint", str(ckpt), "--test-steps", "100",
                                   "--episodes", "1", "--output", str(tmp_path / "ev")])
        assert res.exit_code == 0, res.output
        metrics = json.loads(res.output)
        assert metrics["test_steps"] == 100 and metrics["condition"] == "full"
        res = runner.invoke(main, ["plot", "--input", str(out)])
        assert res.exit_code == 0, res.output
        assert all(Path(p).exists() for p in res.output.split())

    def test_eval_rejects_mismatched_config(self, smoke_run):
        out, _ = smoke_run
        ckpt = out / "none" / "seed0" / "checkpoint.npz"
        res = CliRunner().invoke(main, ["eval", "--checkpoint", str(ckpt), "--config", "grid"])
        assert res.exit_code != 0
        assert "env" in res.output

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HOMEORL_OUTPUT", str(tmp_path))
        res = CliRunner().invoke(main, ["train", "--config", "smoke", "--seeds", "1",
                                        "--conditions", "none", "--total-timesteps", "512"])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "smoke" / "none" / "seed0" / "eval.json").exists()

    def test_plot_empty_dir(self, tmp_path):
        res = CliRunner().invoke(main, ["plot", "--input", str(tmp_path)])
        assert res.exit_code != 0
