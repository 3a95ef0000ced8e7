from homeorl.harness.config import EvalConfig, ExperimentConfig, load_config
from homeorl.harness.train import run_training, train_seed

__all__ = ["EvalConfig", "ExperimentConfig", "load_config", "run_training", "train_seed"]
