"""Experiment configuration files (YAML) and shipped presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from homeorl.drives import CONDITIONS, get_condition
from homeorl.envs import ENVIRONMENTS
from homeorl.ppo import HIDDEN_DIMS, PRESETS, PPOConfig

PRESET_NAMES = ("foodshare", "grid", "field2d", "field2d_desk", "smoke")


@dataclass
class EvalConfig:
    eval_episodes: int = 10
    test_steps: int = 1000
    histogram_steps: int = 2000
    histogram_bins: int = 20

    def __post_init__(self):
        if min(self.eval_episodes, self.test_steps, self.histogram_steps, self.histogram_bins) <= 0:
            raise ValueError("evaluation sizes must be positive")


@dataclass
class ExperimentConfig:
    env: str
    conditions: list[str]
    ppo: PPOConfig
    hidden_dim: int
    lstm_dim: int
    env_params: dict = field(default_factory=dict)
    n_seeds: int = 5
    base_seed: int = 0
    eval: EvalConfig = field(default_factory=EvalConfig)
    name: str = ""
    curve_window: int = 16
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.env!r}; expected one of {sorted(ENVIRONMENTS)}")
        if isinstance(self.conditions, str):
            self.conditions = [self.conditions]
        self.conditions = [get_condition(c).name for c in self.conditions]
        if not self.conditions:
            raise ValueError("at least one empathy condition is required")
        if self.n_seeds <= 0:
            raise ValueError("n_seeds must be positive")
        if not self.name:
            self.name = self.env

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ppo"] = self.ppo.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        env = d.get("env")
        if env not in ENVIRONMENTS:
            raise ValueError(f"config 'env' must be one of {sorted(ENVIRONMENTS)}, got {env!r}")
        ppo = {**PRESETS[env].to_dict(), **(d.pop("ppo", None) or {})}
        d["ppo"] = PPOConfig.from_dict(ppo)
        d.setdefault("hidden_dim", HIDDEN_DIMS[env])
        d.setdefault("lstm_dim", d["hidden_dim"])
        d.setdefault("conditions", sorted(CONDITIONS))
        if "condition" in d:
            d["conditions"] = [d.pop("condition")]
        d["eval"] = EvalConfig(**(d.get("eval") or {}))
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def for_condition(self, condition: str) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        cfg.conditions = [get_condition(condition).name]
        return cfg

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(source: str | Path) -> ExperimentConfig:
    """Load a YAML file, or a shipped preset by name."""
    text = None
    if str(source) in PRESET_NAMES:
        text = resources.files("homeorl.configs").joinpath(f"{source}.yaml").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path} (presets: {', '.join(PRESET_NAMES)})")
        text = path.read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"config {source} must be a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return path
