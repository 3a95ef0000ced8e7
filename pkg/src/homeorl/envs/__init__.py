from homeorl.envs.base import EpisodeOverError, StepResult, write_trajectory_csv
from homeorl.envs.field2d import Field2DEnv, Field2DState
from homeorl.envs.foodshare import FoodShareEnv, FoodShareState
from homeorl.envs.grid import GridEnv, GridState

ENVIRONMENTS = {
    "foodshare": FoodShareEnv,
    "grid": GridEnv,
    "field2d": Field2DEnv,
}


def make_env(env_id: str, condition, seed=None, **params):
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; expected one of {sorted(ENVIRONMENTS)}") from None
    return cls(condition=condition, seed=seed, **params)


__all__ = [
    "ENVIRONMENTS",
    "EpisodeOverError",
    "Field2DEnv",
    "Field2DState",
    "FoodShareEnv",
    "FoodShareState",
    "GridEnv",
    "GridState",
    "StepResult",
    "make_env",
    "write_trajectory_csv",
]
