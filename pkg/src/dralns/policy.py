"""From-scratch PPO for the search controller.

A small MLP (7 inputs, two tanh hidden layers of 64) with four categorical
output heads (destroy operator, repair operator, severity 1..10,
temperature level 1..50) and a scalar value head.  Gradients are computed
by hand (reverse mode through the network) and applied with Adam; rollouts
are collected synchronously over a batch of environments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .env import (OBS_DIM, SEVERITY_LEVELS, STAGNATION_FEATURE, TEMP_LEVELS,
                  ActionTuple, AlnsEnv, EnvConfig)

HIDDEN = 64
CHECKPOINT_VERSION = 1

HeadSizes = tuple[int, int, int, int]


class FingerprintError(Exception):
    """Checkpoint does not match the configured problem/action space."""


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    update_epochs: int = 10
    minibatch_count: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    parallel_envs: int = 10
    total_steps: int = 300_000
    horizon: int = 100

    def __post_init__(self) -> None:
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if min(self.update_epochs, self.minibatch_count, self.parallel_envs,
               self.total_steps, self.horizon) < 1:
            raise ValueError("counts must be positive")


@dataclass
class PolicyParams:
    """All network parameters keyed by name, plus the head layout."""

    arrays: dict[str, np.ndarray]
    head_sizes: HeadSizes

    HEAD_KEYS = ("destroy", "repair", "severity", "temp")

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.arrays.items()},
                            self.head_sizes)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_policy(head_sizes: HeadSizes, seed_or_rng: int | np.random.Generator,
                hidden: int = HIDDEN) -> PolicyParams:
    """Orthogonal initialization: gain sqrt(2) in the trunk, 0.01 on the
    action heads (near-uniform initial policy) and 1.0 on the value head."""
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_or_rng))))
    arrays = {
        "w1": _orthogonal(OBS_DIM, hidden, np.sqrt(2.0), rng),
        "b1": np.zeros(hidden),
        "w2": _orthogonal(hidden, hidden, np.sqrt(2.0), rng),
        "b2": np.zeros(hidden),
    }
    for key, size in zip(PolicyParams.HEAD_KEYS, head_sizes):
        arrays[f"{key}_w"] = _orthogonal(hidden, size, 0.01, rng)
        arrays[f"{key}_b"] = np.zeros(size)
    arrays["value_w"] = _orthogonal(hidden, 1, 1.0, rng)
    arrays["value_b"] = np.zeros(1)
    return PolicyParams(arrays, tuple(int(s) for s in head_sizes))


def prepare_inputs(observations: np.ndarray, episode_length: int) -> np.ndarray:
    """Condition raw observations for the network: the stagnation count is
    scaled by the episode length so every input stays O(1)."""
    x = np.atleast_2d(np.asarray(observations, dtype=np.float64)).copy()
    x[:, STAGNATION_FEATURE] /= max(1, episode_length)
    return x


def _forward_trunk(params: PolicyParams, x: np.ndarray):
    a = params.arrays
    h1 = np.tanh(x @ a["w1"] + a["b1"])
    h2 = np.tanh(h1 @ a["w2"] + a["b2"])
    return h1, h2


def forward(params: PolicyParams, observations: np.ndarray):
    """Logits per head plus state values for a batch of prepared inputs."""
    x = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if x.shape[1] != OBS_DIM:
        raise ValueError(f"observations must have {OBS_DIM} features")
    _, h2 = _forward_trunk(params, x)
    a = params.arrays
    logits = [h2 @ a[f"{k}_w"] + a[f"{k}_b"] for k in PolicyParams.HEAD_KEYS]
    values = (h2 @ a["value_w"] + a["value_b"])[:, 0]
    return logits, values


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def head_distributions(logits: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.exp(_log_softmax(l)) for l in logits]


def sample_action_batch(logits: Sequence[np.ndarray],
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One categorical sample per head per row; returns 0-based head indices
    (B, 4) and the joint log-probabilities (B,)."""
    batch = logits[0].shape[0]
    indices = np.empty((batch, len(logits)), dtype=np.int64)
    joint = np.zeros(batch)
    for h, head_logits in enumerate(logits):
        logp = _log_softmax(head_logits)
        cum = np.cumsum(np.exp(logp), axis=1)
        u = rng.random(batch)
        idx = (u[:, None] * cum[:, -1:] > cum).sum(axis=1)
        idx = np.minimum(idx, head_logits.shape[1] - 1)
        indices[:, h] = idx
        joint += logp[np.arange(batch), idx]
    return indices, joint


def indices_to_action(indices: np.ndarray) -> ActionTuple:
    """0-based head indices to the environment's action (severity and
    temperature level are 1-based)."""
    return ActionTuple(destroy_idx=int(indices[0]), repair_idx=int(indices[1]),
                       severity=int(indices[2]) + 1, temp_level=int(indices[3]) + 1)


def action_to_indices(action: ActionTuple) -> np.ndarray:
    return np.asarray([action.destroy_idx, action.repair_idx,
                       action.severity - 1, action.temp_level - 1], dtype=np.int64)


def sample_action(params: PolicyParams, observation: np.ndarray,
                  rng: np.random.Generator,
                  episode_length: int = 100) -> tuple[ActionTuple, float]:
    """Sample one action for a single raw observation."""
    x = prepare_inputs(observation, episode_length)
    logits, _ = forward(params, x)
    indices, joint = sample_action_batch(logits, rng)
    return indices_to_action(indices[0]), float(joint[0])


def joint_log_prob(logits: Sequence[np.ndarray], indices: np.ndarray) -> np.ndarray:
    batch = indices.shape[0]
    rows = np.arange(batch)
    total = np.zeros(batch)
    for h, head_logits in enumerate(logits):
        total += _log_softmax(head_logits)[rows, indices[:, h]]
    return total


class PolicyAgent:
    """Deployment-time wrapper: sample from the policy (default) or act
    greedily per head with ``deterministic=True``."""

    def __init__(self, params: PolicyParams, episode_length: int,
                 deterministic: bool = False):
        self.params = params
        self.episode_length = episode_length
        self.deterministic = deterministic

    def act(self, observation, rng: np.random.Generator) -> ActionTuple:
        obs = np.asarray(observation, dtype=np.float64)
        if self.deterministic:
            logits, _ = forward(self.params, prepare_inputs(obs, self.episode_length))
            indices = np.asarray([int(np.argmax(l[0])) for l in logits])
            return indices_to_action(indices)
        action, _ = sample_action(self.params, obs, rng, self.episode_length)
        return action


# ---------------------------------------------------------------------------
# advantages
# ---------------------------------------------------------------------------

def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float, last_values: np.ndarray,
        normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (T, N) rollout.

    Returns are computed from the raw advantages; normalization (zero mean,
    unit variance over the whole batch) applies to the advantages only and
    is skipped when their variance vanishes.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    horizon = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1] if rewards.ndim > 1 else ())
    next_values = np.asarray(last_values, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        delta = rewards[t] + gamma * next_values * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        advantages[t] = running
        next_values = values[t]
    returns = advantages + values
    if normalize:
        std = advantages.std()
        if std > 1e-8:
            advantages = (advantages - advantages.mean()) / std
        else:
            advantages = advantages - advantages.mean()
    return advantages, returns


@dataclass
class RolloutBuffer:
    """One synchronous rollout: (horizon, n_envs) arrays plus the bootstrap
    values for the observation after the last step."""

    observations: np.ndarray   # (T, N, OBS_DIM), network inputs
    actions: np.ndarray        # (T, N, 4), 0-based head indices
    log_probs: np.ndarray      # (T, N)
    values: np.ndarray         # (T, N)
    rewards: np.ndarray        # (T, N)
    dones: np.ndarray          # (T, N)
    last_values: np.ndarray    # (N,)

    def __len__(self) -> int:
        return int(np.prod(self.rewards.shape))


# ---------------------------------------------------------------------------
# loss and gradients
# ---------------------------------------------------------------------------

def loss_and_grads(params: PolicyParams, batch: dict[str, np.ndarray],
                   config: PpoConfig):
    """PPO loss (clipped surrogate + value regression - entropy bonus) and
    its exact gradients via reverse mode through the MLP.

    ``batch`` holds prepared inputs ``obs`` (B, OBS_DIM), 0-based action
    ``indices`` (B, 4), ``old_log_probs``, ``advantages`` and ``returns``.
    """
    a = params.arrays
    x = batch["obs"]
    indices = batch["indices"]
    adv = batch["advantages"]
    rets = batch["returns"]
    old_logp = batch["old_log_probs"]
    B = x.shape[0]
    rows = np.arange(B)
    eps = config.clip_epsilon

    h1, h2 = _forward_trunk(params, x)
    head_logp = []
    head_p = []
    head_entropy = []
    new_logp = np.zeros(B)
    entropy_rows = np.zeros(B)
    for key in PolicyParams.HEAD_KEYS:
        logits = h2 @ a[f"{key}_w"] + a[f"{key}_b"]
        logp = _log_softmax(logits)
        p = np.exp(logp)
        head_logp.append(logp)
        head_p.append(p)
        head_entropy.append(-(p * logp).sum(axis=1))
        new_logp += logp[rows, indices[:, len(head_logp) - 1]]
        entropy_rows += head_entropy[-1]
    values = (h2 @ a["value_w"] + a["value_b"])[:, 0]

    ratio = np.exp(new_logp - old_logp)
    surrogate = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.minimum(surrogate, clipped).mean()
    value_loss = ((values - rets) ** 2).mean()
    entropy = entropy_rows.mean()
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    # gradient of the policy term flows through the ratio only where the
    # unclipped surrogate is the active branch of the min
    unclipped_active = surrogate <= clipped
    d_logp = -(adv * ratio * unclipped_active) / B
    d_values = config.value_coef * 2.0 * (values - rets) / B

    grads = {k: np.zeros_like(v) for k, v in a.items()}
    d_h2 = d_values[:, None] @ a["value_w"].T
    grads["value_w"] = h2.T @ d_values[:, None]
    grads["value_b"] = np.asarray([d_values.sum()])
    for h, key in enumerate(PolicyParams.HEAD_KEYS):
        p = head_p[h]
        logp = head_logp[h]
        one_hot = np.zeros_like(p)
        one_hot[rows, indices[:, h]] = 1.0
        d_logits = d_logp[:, None] * (one_hot - p)
        # entropy bonus: d(-c_e * mean(H_h)) / d logits_h = (c_e / B) * p * (logp + H_h)
        d_logits += (config.entropy_coef / B) * p * (logp + head_entropy[h][:, None])
        grads[f"{key}_w"] = h2.T @ d_logits
        grads[f"{key}_b"] = d_logits.sum(axis=0)
        d_h2 += d_logits @ a[f"{key}_w"].T
    d_z2 = d_h2 * (1.0 - h2 ** 2)
    grads["w2"] = h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ a["w2"].T) * (1.0 - h1 ** 2)
    grads["w1"] = x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)

    metrics = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    return loss, grads, metrics


class Adam:
    """Per-parameter adaptive first-order optimizer with bias correction."""

    def __init__(self, params: PolicyParams, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}

    def step(self, params: PolicyParams, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for key, g in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / c1
            v_hat = self.v[key] / c2
            params.arrays[key] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict[str, Any]:
        return {"step_count": self.step_count, "m": self.m, "v": self.v}

    def load_state(self, state: dict[str, Any]) -> None:
        self.step_count = int(state["step_count"])
        self.m = {k: np.asarray(v) for k, v in state["m"].items()}
        self.v = {k: np.asarray(v) for k, v in state["v"].items()}


def ppo_update(params: PolicyParams, optimizer: Adam, buffer: RolloutBuffer,
               config: PpoConfig, rng: np.random.Generator) -> dict[str, float]:
    """Several epochs of minibatch updates over one rollout.

    Advantages are recomputed from the buffer (never stale) and normalized
    over the whole batch.  A non-finite loss aborts the update and leaves
    the parameters untouched for that minibatch.
    """
    advantages, returns = gae(buffer.rewards, buffer.values, buffer.dones,
                              config.gamma, config.gae_lambda, buffer.last_values)
    flat = {
        "obs": buffer.observations.reshape(-1, OBS_DIM),
        "indices": buffer.actions.reshape(-1, 4),
        "old_log_probs": buffer.log_probs.reshape(-1),
        "advantages": advantages.reshape(-1),
        "returns": returns.reshape(-1),
    }
    total = flat["old_log_probs"].shape[0]
    metrics_acc: dict[str, float] = {}
    count = 0
    aborted = False
    for _ in range(config.update_epochs):
        order = rng.permutation(total)
        for chunk in np.array_split(order, config.minibatch_count):
            batch = {k: v[chunk] for k, v in flat.items()}
            loss, grads, metrics = loss_and_grads(params, batch, config)
            if not np.isfinite(loss):
                aborted = True
                break
            optimizer.step(params, grads)
            for k, v in metrics.items():
                metrics_acc[k] = metrics_acc.get(k, 0.0) + v
            count += 1
        if aborted:
            break
    out = {k: v / max(1, count) for k, v in metrics_acc.items()}
    out["aborted"] = float(aborted)
    return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainingTrace:
    """Per-episode rewards (with a rolling window) and per-update metrics."""

    episodes: list[dict[str, float]] = field(default_factory=list)
    updates: list[dict[str, float]] = field(default_factory=list)
    window: int = 20
    final_optimizer: "Adam | None" = None  # for checkpointing resumable state

    def record_episode(self, step: int, episode_reward: float, length: int) -> None:
        recent = [e["episode_reward"] for e in self.episodes[-(self.window - 1):]]
        recent.append(episode_reward)
        self.episodes.append({
            "episode": len(self.episodes),
            "total_steps": step,
            "episode_reward": episode_reward,
            "reward_per_step": episode_reward / max(1, length),
            "rolling_mean": float(np.mean(recent)),
            "rolling_std": float(np.std(recent)),
        })

    def rolling_mean_at(self, episode_index: int) -> float:
        return self.episodes[episode_index]["rolling_mean"]


def train(instances: Sequence[Any], make_search: Callable[[Any], Any],
          env_config: EnvConfig, ppo_config: PpoConfig, seed: int, *,
          params: PolicyParams | None = None, optimizer: Adam | None = None,
          start_step: int = 0, checkpoint_every: int = 0,
          checkpoint_fn: Callable[[PolicyParams, Adam, int], None] | None = None,
          log_every: int = 0) -> tuple[PolicyParams, TrainingTrace]:
    """Synchronous PPO over a batch of environments.

    Fully deterministic given (instances, configs, seed).  Pass ``params``
    / ``optimizer`` / ``start_step`` to resume a previous run.
    """
    if len(instances) == 0:
        raise ValueError("instance pool must not be empty")
    n_envs = ppo_config.parallel_envs
    horizon = ppo_config.horizon
    master = np.random.SeedSequence(seed)
    ss_init, ss_actions, ss_update, *ss_envs = master.spawn(3 + n_envs)

    probe = make_search(instances[0])
    head_sizes: HeadSizes = (len(probe.destroy_names), len(probe.repair_names),
                             SEVERITY_LEVELS, TEMP_LEVELS)
    if params is None:
        params = init_policy(head_sizes, np.random.Generator(np.random.PCG64(ss_init)))
    elif params.head_sizes != head_sizes:
        raise FingerprintError(f"policy heads {params.head_sizes} do not match "
                               f"the problem's action space {head_sizes}")
    if optimizer is None:
        optimizer = Adam(params, ppo_config.learning_rate)
    action_rng = np.random.Generator(np.random.PCG64(ss_actions))
    update_rng = np.random.Generator(np.random.PCG64(ss_update))

    envs = [AlnsEnv(instances, make_search, env_config,
                    np.random.Generator(np.random.PCG64(ss)))
            for ss in ss_envs]
    obs = np.stack([env.reset().as_array() for env in envs])
    episode_rewards = np.zeros(n_envs)
    episode_lengths = np.zeros(n_envs, dtype=np.int64)
    trace = TrainingTrace()
    step = start_step

    steps_per_update = n_envs * horizon
    n_updates = max(0, (ppo_config.total_steps - start_step)) // steps_per_update
    for _ in range(n_updates):
        buf_obs = np.empty((horizon, n_envs, OBS_DIM))
        buf_actions = np.empty((horizon, n_envs, 4), dtype=np.int64)
        buf_logp = np.empty((horizon, n_envs))
        buf_values = np.empty((horizon, n_envs))
        buf_rewards = np.empty((horizon, n_envs))
        buf_dones = np.empty((horizon, n_envs))
        for t in range(horizon):
            inputs = prepare_inputs(obs, env_config.episode_length)
            logits, values = forward(params, inputs)
            indices, joint = sample_action_batch(logits, action_rng)
            buf_obs[t] = inputs
            buf_actions[t] = indices
            buf_logp[t] = joint
            buf_values[t] = values
            for i, env in enumerate(envs):
                result = env.step(indices_to_action(indices[i]))
                buf_rewards[t, i] = result.reward
                buf_dones[t, i] = float(result.done)
                episode_rewards[i] += result.reward
                episode_lengths[i] += 1
                if result.done:
                    trace.record_episode(step + (t + 1) * n_envs - (n_envs - 1 - i),
                                         episode_rewards[i], int(episode_lengths[i]))
                    episode_rewards[i] = 0.0
                    episode_lengths[i] = 0
                    obs[i] = env.reset().as_array()
                else:
                    obs[i] = result.observation.as_array()
        _, last_values = forward(params, prepare_inputs(obs, env_config.episode_length))
        buffer = RolloutBuffer(observations=buf_obs, actions=buf_actions,
                               log_probs=buf_logp, values=buf_values,
                               rewards=buf_rewards, dones=buf_dones,
                               last_values=last_values)
        metrics = ppo_update(params, optimizer, buffer, ppo_config, update_rng)
        step += steps_per_update
        metrics["total_steps"] = float(step)
        if trace.episodes:
            metrics["rolling_mean_reward"] = trace.episodes[-1]["rolling_mean"]
        trace.updates.append(metrics)
        if log_every and len(trace.updates) % log_every == 0:
            print(f"  steps={step} rolling_mean_reward="
                  f"{metrics.get('rolling_mean_reward', float('nan')):.2f} "
                  f"entropy={metrics.get('entropy', float('nan')):.3f}")
        if checkpoint_every and checkpoint_fn and step % checkpoint_every == 0:
            checkpoint_fn(params, optimizer, step)
    trace.final_optimizer = optimizer
    return params, trace


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: PolicyParams, fingerprint: dict[str, Any],
                    step: int = 0, optimizer: Adam | None = None) -> None:
    """Versioned binary checkpoint: parameter arrays plus a JSON header with
    the layer layout and the environment/action-space fingerprint."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": OBS_DIM,
        "head_sizes": list(params.head_sizes),
        "fingerprint": fingerprint,
        "step": int(step),
    }
    payload = {f"param_{k}": v for k, v in params.arrays.items()}
    if optimizer is not None:
        payload.update({f"adam_m_{k}": v for k, v in optimizer.m.items()})
        payload.update({f"adam_v_{k}": v for k, v in optimizer.v.items()})
        meta["adam"] = {"step_count": optimizer.step_count,
                        "learning_rate": optimizer.learning_rate}
    payload["meta"] = np.asarray(json.dumps(meta, sort_keys=True))
    np.savez(path, **payload)


def load_checkpoint(path, expected_fingerprint: dict[str, Any] | None = None,
                    allow_transfer: bool = False):
    """Load a checkpoint, enforcing the action-space fingerprint.

    Head-size mismatches are always errors; a different problem name with
    matching heads is allowed only with ``allow_transfer``.  Returns
    (params, meta, optimizer_state_or_None).
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise FingerprintError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k[len("param_"):]: data[k] for k in data.files if k.startswith("param_")}
        adam_m = {k[len("adam_m_"):]: data[k] for k in data.files if k.startswith("adam_m_")}
        adam_v = {k[len("adam_v_"):]: data[k] for k in data.files if k.startswith("adam_v_")}
    params = PolicyParams(arrays, tuple(meta["head_sizes"]))
    if expected_fingerprint is not None:
        saved = meta["fingerprint"]
        same_heads = (saved.get("n_destroy") == expected_fingerprint.get("n_destroy")
                      and saved.get("n_repair") == expected_fingerprint.get("n_repair"))
        if not same_heads:
            raise FingerprintError(
                f"checkpoint action space ({saved.get('n_destroy')} destroy, "
                f"{saved.get('n_repair')} repair) does not match the problem "
                f"({expected_fingerprint.get('n_destroy')} destroy, "
                f"{expected_fingerprint.get('n_repair')} repair)")
        if saved != expected_fingerprint and not allow_transfer:
            raise FingerprintError(
                f"checkpoint fingerprint {saved} does not match {expected_fingerprint}; "
                "pass --allow-transfer to reuse it across problems")
    optimizer_state = None
    if "adam" in meta:
        optimizer_state = {"step_count": meta["adam"]["step_count"],
                           "learning_rate": meta["adam"]["learning_rate"],
                           "m": adam_m, "v": adam_v}
    return params, meta, optimizer_state
