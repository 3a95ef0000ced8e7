"""Recurrent actor-critic: ReLU encoder -> LSTM -> softmax policy and value heads.

The value head reads the same recurrent output as the policy head. All
arrays are float64 and time-major where a time axis exists.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from homeorl.nn import kernels

PARAM_NAMES = ("w_enc", "b_enc", "w_ih", "w_hh", "b_lstm", "w_pi", "b_pi", "w_v", "b_v")
CHECKPOINT_VERSION = 1


class PolicyParams:
    """Named weight arrays of the network. Gradients use the same container."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.arrays = {k: np.asarray(arrays[k], dtype=np.float64) for k in PARAM_NAMES}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray):
        self.arrays[name] = value

    def __iter__(self):
        return iter(PARAM_NAMES)

    def items(self):
        return ((k, self.arrays[k]) for k in PARAM_NAMES)

    @property
    def obs_dim(self) -> int:
        return self.arrays["w_enc"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.arrays["w_enc"].shape[1]

    @property
    def lstm_dim(self) -> int:
        return self.arrays["w_hh"].shape[0]

    @property
    def n_actions(self) -> int:
        return self.arrays["w_pi"].shape[1]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self.items()}

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams({k: np.zeros_like(v) for k, v in self.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for _, v in self.items()])

    def set_flat(self, vec: np.ndarray):
        i = 0
        for k, v in self.items():
            n = v.size
            self.arrays[k] = np.asarray(vec[i:i + n], dtype=np.float64).reshape(v.shape).copy()
            i += n
        if i != len(vec):
            raise ValueError("flat vector length does not match parameter count")

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(v * v)) for _, v in self.items())))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, v in self.items())


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(
    obs_dim: int,
    n_actions: int,
    hidden_dim: int,
    lstm_dim: int | None = None,
    rng=None,
    policy_gain: float = 0.01,
) -> PolicyParams:
    """Orthogonal weights with gain 1 and zero biases; the policy head starts
    at ``policy_gain`` so the initial action distribution is near uniform."""
    rng = np.random.default_rng(rng)
    lstm_dim = hidden_dim if lstm_dim is None else lstm_dim
    g = 4 * lstm_dim
    return PolicyParams({
        "w_enc": _orthogonal(rng, (obs_dim, hidden_dim), 1.0),
        "b_enc": np.zeros(hidden_dim),
        # one orthogonal block per gate
        "w_ih": np.concatenate([_orthogonal(rng, (hidden_dim, lstm_dim), 1.0) for _ in range(4)], axis=1),
        "w_hh": np.concatenate([_orthogonal(rng, (lstm_dim, lstm_dim), 1.0) for _ in range(4)], axis=1),
        "b_lstm": np.zeros(g),
        "w_pi": _orthogonal(rng, (lstm_dim, n_actions), policy_gain),
        "b_pi": np.zeros(n_actions),
        "w_v": _orthogonal(rng, (lstm_dim, 1), 1.0),
        "b_v": np.zeros(1),
    })


@dataclass
class RecurrentState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, batch: int, dim: int) -> "RecurrentState":
        return cls(np.zeros((batch, dim)), np.zeros((batch, dim)))

    def copy(self) -> "RecurrentState":
        return RecurrentState(self.h.copy(), self.c.copy())

    def reset_where(self, mask) -> "RecurrentState":
        """Zero the rows flagged in ``mask`` (episode starts)."""
        keep = 1.0 - np.asarray(mask, dtype=np.float64)[:, None]
        return RecurrentState(self.h * keep, self.c * keep)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


@dataclass
class SequenceCache:
    obs: np.ndarray
    pre_enc: np.ndarray
    enc: np.ndarray
    keep: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray


@dataclass
class SequenceOutput:
    logits: np.ndarray  # (T, B, A)
    values: np.ndarray  # (T, B)
    final_state: RecurrentState
    cache: SequenceCache


def _check_obs(obs: np.ndarray, params: PolicyParams):
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(
            f"observation dim {obs.shape[-1]} does not match network input dim {params.obs_dim}"
        )


def forward_sequence(obs, starts, state: RecurrentState, params: PolicyParams) -> SequenceOutput:
    """Unroll over ``obs`` of shape ``(T, B, obs_dim)``.

    ``starts[t, b]`` flags that step ``t`` begins a new episode for stream
    ``b``; the carried recurrent state is zeroed there and no gradient flows
    back across it.
    """
    obs = np.asarray(obs, dtype=np.float64)
    _check_obs(obs, params)
    T, B, D = obs.shape
    if state.h.shape != (B, params.lstm_dim):
        raise ValueError(f"recurrent state shape {state.h.shape} != {(B, params.lstm_dim)}")
    keep = 1.0 - np.asarray(starts, dtype=np.float64).reshape(T, B)
    flat = obs.reshape(T * B, D)
    pre = flat @ params["w_enc"] + params["b_enc"]
    enc = np.maximum(pre, 0.0)
    xproj = (enc @ params["w_ih"] + params["b_lstm"]).reshape(T, B, -1)
    hs, cs, gates, h_prev, c_prev = kernels.lstm_forward(xproj, params["w_hh"], state.h, state.c, keep)
    hflat = hs.reshape(T * B, -1)
    logits = (hflat @ params["w_pi"] + params["b_pi"]).reshape(T, B, -1)
    values = (hflat @ params["w_v"] + params["b_v"]).reshape(T, B)
    cache = SequenceCache(obs, pre, enc, keep, hs, cs, gates, h_prev, c_prev)
    return SequenceOutput(logits, values, RecurrentState(hs[-1].copy(), cs[-1].copy()), cache)


def backward_sequence(cache: SequenceCache, dlogits, dvalues, params: PolicyParams) -> PolicyParams:
    """Exact gradients of a scalar loss given its gradients w.r.t. the
    logits ``(T, B, A)`` and values ``(T, B)`` of a recorded unroll."""
    T, B, D = cache.obs.shape
    A = params.n_actions
    hflat = cache.hs.reshape(T * B, -1)
    dl = np.asarray(dlogits, dtype=np.float64).reshape(T * B, A)
    dv = np.asarray(dvalues, dtype=np.float64).reshape(T * B, 1)
    grads = {
        "w_pi": hflat.T @ dl,
        "b_pi": dl.sum(axis=0),
        "w_v": hflat.T @ dv,
        "b_v": dv.sum(axis=0),
    }
    dhs = (dl @ params["w_pi"].T + dv @ params["w_v"].T).reshape(T, B, -1)
    dxproj, dw_hh = kernels.lstm_backward(
        dhs, cache.cs, cache.gates, cache.h_prev, cache.c_prev, cache.keep, params["w_hh"]
    )
    dx = dxproj.reshape(T * B, -1)
    grads["w_hh"] = dw_hh
    grads["w_ih"] = cache.enc.T @ dx
    grads["b_lstm"] = dx.sum(axis=0)
    dpre = (dx @ params["w_ih"].T) * (cache.pre_enc > 0)
    grads["w_enc"] = cache.obs.reshape(T * B, D).T @ dpre
    grads["b_enc"] = dpre.sum(axis=0)
    return PolicyParams(grads)


def forward(obs, state: RecurrentState, params: PolicyParams):
    """One step for a batch (or a single observation vector).

    Returns ``(logits, probs, value, new_state)``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    if single:
        obs = obs[None]
    out = forward_sequence(obs[None], np.zeros((1, obs.shape[0])), state, params)
    logits = out.logits[0]
    probs = softmax(logits)
    value = out.values[0]
    if single:
        return logits[0], probs[0], float(value[0]), out.final_state
    return logits, probs, value, out.final_state


def sample_action(probs, rng: np.random.Generator):
    """Draw one action per row of ``probs``; returns ``(index, log_prob)``.

    Inverse-CDF sampling with one uniform per row keeps the random stream
    consumption fixed regardless of the probabilities.
    """
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    p = probs[None] if single else probs
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0]) * cdf[:, -1]
    idx = (u[:, None] >= cdf).sum(axis=1)
    idx = np.minimum(idx, p.shape[1] - 1)
    # never pick a zero-probability action through float slack
    zero = p[np.arange(len(idx)), idx] <= 0.0
    if zero.any():
        idx[zero] = np.argmax(p[zero], axis=1)
    with np.errstate(divide="ignore"):
        logp = np.log(p[np.arange(len(idx)), idx])
    if single:
        return int(idx[0]), float(logp[0])
    return idx, logp


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: PolicyParams, config: dict | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": CHECKPOINT_VERSION,
        "shapes": {k: list(v) for k, v in params.shapes().items()},
        "config": config or {},
        "config_hash": config_hash(config or {}),
        "extra": extra or {},
    }
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **params.arrays)
    return path


def load_checkpoint(path, expected_shapes: dict | None = None) -> tuple[PolicyParams, dict]:
    """Load parameters and metadata; shape mismatches are rejected."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        arrays = {k: data[k] for k in PARAM_NAMES}
    params = PolicyParams(arrays)
    recorded = {k: tuple(v) for k, v in meta["shapes"].items()}
    if recorded != params.shapes():
        raise ValueError("checkpoint arrays do not match their recorded shapes")
    if expected_shapes is not None:
        expected = {k: tuple(v) for k, v in expected_shapes.items()}
        if expected != params.shapes():
            diff = {k: (params.shapes().get(k), expected.get(k)) for k in expected
                    if params.shapes().get(k) != expected.get(k)}
            raise ValueError(f"checkpoint shape mismatch (found, expected): {diff}")
    return params, meta
