"""Recurrent PPO: rollout collection, GAE and the clipped update.

Minibatches are whole stream segments (one stream per learning agent per
worker) so the LSTM can be replayed from the state stored at the start of
the rollout, resetting exactly where episodes began during collection.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from homeorl.nn import kernels
from homeorl.nn.network import (
    PolicyParams,
    RecurrentState,
    backward_sequence,
    forward_sequence,
    log_softmax,
    sample_action,
    softmax,
)

log = logging.getLogger(__name__)


@dataclass
class PPOConfig:
    learning_rate: float = 1e-3
    n_workers: int = 16
    rollout_steps: int = 32
    gamma: float = 0.99
    gae_lambda: float = 0.95
    n_minibatches: int = 4
    update_epochs: int = 4
    normalize_advantage: bool = True
    clip_coef: float = 0.1
    clip_value_loss: bool = True
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_timesteps: int = 25_000
    adam_eps: float = 1e-5

    def __post_init__(self):
        for name in ("learning_rate", "n_workers", "rollout_steps", "n_minibatches",
                     "update_epochs", "clip_coef", "max_grad_norm", "total_timesteps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.gamma < 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma must be in [0, 1) and gae_lambda in [0, 1]")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("loss coefficients must be non-negative")

    @property
    def n_iterations(self) -> int:
        return max(1, self.total_timesteps // (self.n_workers * self.rollout_steps))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PPOConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown PPO config keys: {sorted(unknown)}")
        return cls(**d)


# Default hyperparameters per environment.
PRESETS = {
    "foodshare": PPOConfig(rollout_steps=32, total_timesteps=25_000),
    "grid": PPOConfig(rollout_steps=100, total_timesteps=1_000_000),
    "field2d": PPOConfig(rollout_steps=1024, total_timesteps=20_000_000, n_minibatches=2,
                         entropy_coef=0.0, value_coef=0.3),
}
HIDDEN_DIMS = {"foodshare": 16, "grid": 32, "field2d": 64}


@dataclass
class RolloutBatch:
    """Time-major arrays of shape ``(T, N)`` over ``N`` agent streams."""

    obs: np.ndarray          # (T, N, obs_dim)
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray        # transition t ended its episode
    starts: np.ndarray       # step t began a new episode (state zeroed first)
    init_state: RecurrentState
    last_value: np.ndarray   # (N,) value of the observation after the last step
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.obs.shape[0]

    @property
    def n_streams(self) -> int:
        return self.obs.shape[1]

    @property
    def size(self) -> int:
        return self.n_steps * self.n_streams


@dataclass
class EpisodeRecord:
    worker: int
    length: int
    terminated: bool
    returns: list[float]
    global_step: int


class RolloutCollector:
    """Steps ``envs`` in lockstep with a shared policy, carrying observations
    and recurrent state across calls. Finished episodes are reset at once."""

    def __init__(self, envs, lstm_dim: int, seed_rng: np.random.Generator):
        self.envs = list(envs)
        self.n_learners = self.envs[0].n_learners
        self.n_streams = len(self.envs) * self.n_learners
        self.lstm_dim = lstm_dim
        seeds = seed_rng.integers(0, 2**63 - 1, size=len(self.envs))
        obs = [np.atleast_2d(env.reset(seed=int(s))) for env, s in zip(self.envs, seeds)]
        self.obs = np.concatenate(obs, axis=0)
        self.starts = np.ones(self.n_streams)
        self.state = RecurrentState.zeros(self.n_streams, lstm_dim)
        self.global_step = 0
        self._ep_len = np.zeros(len(self.envs), dtype=np.int64)
        self._ep_ret = np.zeros(self.n_streams)
        self.finished: list[EpisodeRecord] = []

    def _act(self, params, rng):
        out = forward_sequence(self.obs[None], self.starts[None], self.state, params)
        probs = softmax(out.logits[0])
        actions, logp = sample_action(probs, rng)
        return actions, logp, out.values[0], out.final_state

    def collect(self, params: PolicyParams, n_steps: int, rng: np.random.Generator,
                on_step=None) -> RolloutBatch:
        T, N, L = n_steps, self.n_streams, self.n_learners
        obs = np.empty((T, N, self.obs.shape[1]))
        actions = np.empty((T, N), dtype=np.int64)
        logps = np.empty((T, N))
        values = np.empty((T, N))
        rewards = np.empty((T, N))
        dones = np.empty((T, N))
        starts = np.empty((T, N))
        init_state = self.state.copy()
        for t in range(T):
            obs[t] = self.obs
            starts[t] = self.starts
            a, lp, v, self.state = self._act(params, rng)
            actions[t], logps[t], values[t] = a, lp, v
            next_obs = []
            next_starts = np.zeros(N)
            for w, env in enumerate(self.envs):
                sl = slice(w * L, (w + 1) * L)
                res = env.step(int(a[w * L]) if L == 1 else a[sl])
                rewards[t, sl] = res.rewards
                dones[t, sl] = float(res.done)
                self._ep_len[w] += 1
                self._ep_ret[sl] += res.rewards
                if on_step is not None:
                    on_step(w, env, a[sl], res)
                if res.done:
                    self.finished.append(EpisodeRecord(
                        w, int(self._ep_len[w]), res.terminated,
                        self._ep_ret[sl].tolist(), self.global_step + len(self.envs),
                    ))
                    self._ep_len[w] = 0
                    self._ep_ret[sl] = 0.0
                    next_obs.append(np.atleast_2d(env.reset()))
                    next_starts[sl] = 1.0
                else:
                    next_obs.append(np.atleast_2d(res.observation))
            self.obs = np.concatenate(next_obs, axis=0)
            self.starts = next_starts
            self.global_step += len(self.envs)
        boot = forward_sequence(self.obs[None], self.starts[None], self.state, params)
        return RolloutBatch(obs, actions, logps, values, rewards, dones, starts,
                            init_state, boot.values[0].copy())

    def pop_finished(self) -> list[EpisodeRecord]:
        done, self.finished = self.finished, []
        return done


def collect_rollout(envs, params, config: PPOConfig, rng, collector: RolloutCollector | None = None):
    if len(envs) != config.n_workers:
        raise ValueError(f"expected {config.n_workers} environments, got {len(envs)}")
    if collector is None:
        collector = RolloutCollector(envs, params.lstm_dim, rng)
    return collector.collect(params, config.rollout_steps, rng)


def compute_gae(batch: RolloutBatch, gamma: float, lam: float):
    """Fill and return ``(advantages, returns)`` for ``batch``."""
    adv = kernels.gae(batch.rewards, batch.values, batch.dones, batch.last_value, gamma, lam)
    batch.advantages = adv
    batch.returns = adv + batch.values
    return adv, batch.returns


def normalize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def clip_grad_norm(grads: PolicyParams, max_norm: float) -> float:
    """Scale ``grads`` in place so their global norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for k, v in grads.items():
            grads[k] = v * scale
    return norm


class Adam:
    def __init__(self, params: PolicyParams, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: PolicyParams, grads: PolicyParams):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


@dataclass
class LossTerms:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    dlogits: np.ndarray
    dvalues: np.ndarray


def ppo_loss(logits, values, actions, old_log_probs, old_values, advantages, returns,
             config: PPOConfig) -> LossTerms:
    """Loss value and its gradients w.r.t. ``logits`` and ``values``.

    Mean over all ``(T, B)`` entries of
    ``-min(r A, clip(r) A) + c_v * 0.5 * max(sq, sq_clipped) - c_e * H``.
    Advantages are used as given (normalize before calling).
    """
    n = actions.size
    eps = config.clip_coef
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    new_logp = np.take_along_axis(logp_all, actions[..., None], axis=-1)[..., 0]
    log_ratio = new_logp - old_log_probs
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    pg1 = -advantages * ratio
    pg2 = -advantages * clipped
    pg_loss = np.maximum(pg1, pg2)
    # The unclipped branch carries the gradient whenever it is the max.
    unclipped_active = pg1 >= pg2
    dratio = np.where(unclipped_active, -advantages, 0.0) / n
    dlogp = dratio * ratio
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, actions[..., None], 1.0, axis=-1)
    dlogits = dlogp[..., None] * (onehot - p)

    entropy = -(p * logp_all).sum(axis=-1)
    # dH/dz_k = -p_k (log p_k + H)
    dent = -p * (logp_all + entropy[..., None])
    dlogits -= config.entropy_coef * dent / n

    if config.clip_value_loss:
        v_clipped = old_values + np.clip(values - old_values, -eps, eps)
        sq = (values - returns) ** 2
        sq_c = (v_clipped - returns) ** 2
        v_loss_each = 0.5 * np.maximum(sq, sq_c)
        inside = np.abs(values - old_values) < eps
        dv = np.where(sq >= sq_c, values - returns, (v_clipped - returns) * inside)
    else:
        v_loss_each = 0.5 * (values - returns) ** 2
        dv = values - returns
    dvalues = config.value_coef * dv / n

    policy_loss = float(pg_loss.mean())
    value_loss = float(v_loss_each.mean())
    ent = float(entropy.mean())
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * ent
    return LossTerms(
        loss=loss,
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=ent,
        clip_fraction=float((np.abs(ratio - 1.0) > eps).mean()),
        approx_kl=float(((ratio - 1.0) - log_ratio).mean()),
        dlogits=dlogits,
        dvalues=dvalues,
    )


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    grad_norm: float = 0.0
    replay_error: float = 0.0
    n_steps: int = 0


def minibatch_slices(n_streams: int, n_minibatches: int, rng: np.random.Generator):
    if n_minibatches > n_streams:
        raise ValueError(f"cannot split {n_streams} streams into {n_minibatches} minibatches")
    perm = rng.permutation(n_streams)
    return [np.sort(part) for part in np.array_split(perm, n_minibatches)]


def minibatch_terms(batch: RolloutBatch, idx, params: PolicyParams, config: PPOConfig):
    state = RecurrentState(batch.init_state.h[idx], batch.init_state.c[idx])
    out = forward_sequence(batch.obs[:, idx], batch.starts[:, idx], state, params)
    adv = batch.advantages[:, idx]
    if config.normalize_advantage:
        adv = normalize(adv)
    terms = ppo_loss(out.logits, out.values, batch.actions[:, idx], batch.log_probs[:, idx],
                     batch.values[:, idx], adv, batch.returns[:, idx], config)
    return out, terms


def replay_log_prob_error(batch: RolloutBatch, params: PolicyParams) -> float:
    """Largest gap between stored and replayed action log-probabilities."""
    out = forward_sequence(batch.obs, batch.starts, batch.init_state, params)
    logp = np.take_along_axis(log_softmax(out.logits), batch.actions[..., None], axis=-1)[..., 0]
    return float(np.max(np.abs(logp - batch.log_probs)))


def ppo_update(batch: RolloutBatch, params: PolicyParams, config: PPOConfig,
               optimizer: Adam, rng: np.random.Generator) -> UpdateStats:
    if batch.advantages is None:
        raise ValueError("compute advantages before updating")
    stats = UpdateStats()
    acc = np.zeros(6)
    first = True
    for _ in range(config.update_epochs):
        for idx in minibatch_slices(batch.n_streams, config.n_minibatches, rng):
            out, terms = minibatch_terms(batch, idx, params, config)
            if not np.isfinite(terms.loss):
                raise FloatingPointError(
                    f"non-finite PPO loss (policy={terms.policy_loss}, value={terms.value_loss}, "
                    f"entropy={terms.entropy}, step={stats.n_steps})"
                )
            if first:
                lp = np.take_along_axis(log_softmax(out.logits), batch.actions[:, idx][..., None],
                                        axis=-1)[..., 0]
                stats.replay_error = float(np.max(np.abs(lp - batch.log_probs[:, idx])))
                first = False
            grads = backward_sequence(out.cache, terms.dlogits, terms.dvalues, params)
            norm = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(params, grads)
            acc += [terms.policy_loss, terms.value_loss, terms.entropy,
                    terms.clip_fraction, terms.approx_kl, norm]
            stats.n_steps += 1
    acc /= max(stats.n_steps, 1)
    (stats.policy_loss, stats.value_loss, stats.entropy,
     stats.clip_fraction, stats.approx_kl, stats.grad_norm) = map(float, acc)
    return stats
