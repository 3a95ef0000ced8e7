from homeorl.nn.kernels import BACKEND
from homeorl.nn.network import (
    PolicyParams,
    RecurrentState,
    backward_sequence,
    forward,
    forward_sequence,
    init_params,
    load_checkpoint,
    log_softmax,
    sample_action,
    save_checkpoint,
    softmax,
)

__all__ = [
    "BACKEND",
    "PolicyParams",
    "RecurrentState",
    "backward_sequence",
    "forward",
    "forward_sequence",
    "init_params",
    "load_checkpoint",
    "log_softmax",
    "sample_action",
    "save_checkpoint",
    "softmax",
]
