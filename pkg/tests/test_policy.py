"""Policy network, sampling, GAE, PPO update, checkpoints."""

import math

import numpy as np
import pytest

from dralns.env import EnvConfig, OBS_DIM
from dralns.policy import (Adam, FingerprintError, PolicyParams, PpoConfig,
                           RolloutBuffer, forward, gae, head_distributions,
                           indices_to_action, init_policy, joint_log_prob,
                           load_checkpoint, loss_and_grads, ppo_update,
                           prepare_inputs, sample_action, sample_action_batch,
                           save_checkpoint, train)
from dralns.problems import make_search_factory
from dralns.routing import generate_routing

from conftest import make_rng

HEADS = (3, 3, 10, 50)


def random_batch(params, rng, size=16, logp_noise=0.3):
    obs = rng.standard_normal((size, OBS_DIM))
    logits, _ = forward(params, obs)
    indices, joint = sample_action_batch(logits, rng)
    return {
        "obs": obs,
        "indices": indices,
        "old_log_probs": joint + rng.uniform(-logp_noise, logp_noise, size=size),
        "advantages": rng.standard_normal(size),
        "returns": rng.standard_normal(size),
    }


def finite_difference_grads(params, batch, config, h=1e-5):
    fd = {}
    for key, arr in params.arrays.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            lp, _, _ = loss_and_grads(params, batch, config)
            arr[idx] = orig - h
            lm, _, _ = loss_and_grads(params, batch, config)
            arr[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        fd[key] = g
    return fd


def max_relative_error(analytic, fd):
    worst = 0.0
    for key in analytic:
        denom = max(np.abs(analytic[key]).max(), np.abs(fd[key]).max(), 1e-8)
        worst = max(worst, np.abs(analytic[key] - fd[key]).max() / denom)
    return worst


class TestForward:
    def test_zero_heads_give_uniform_distributions(self):
        params = init_policy(HEADS, make_rng(0))
        for key in PolicyParams.HEAD_KEYS:
            params.arrays[f"{key}_w"][:] = 0.0
            params.arrays[f"{key}_b"][:] = 0.0
        logits, values = forward(params, make_rng(1).standard_normal((4, OBS_DIM)))
        for head, size in zip(head_distributions(logits), HEADS):
            assert head.shape[1] == size
            assert np.allclose(head, 1.0 / size)

    def test_probabilities_normalized(self):
        params = init_policy(HEADS, make_rng(0))
        logits, _ = forward(params, make_rng(1).standard_normal((8, OBS_DIM)))
        for head in head_distributions(logits):
            assert np.allclose(head.sum(axis=1), 1.0, atol=1e-6)

    def test_value_is_finite_scalar(self):
        params = init_policy(HEADS, make_rng(0))
        _, values = forward(params, make_rng(1).standard_normal((5, OBS_DIM)))
        assert values.shape == (5,)
        assert np.all(np.isfinite(values))

    def test_batched_equals_single(self):
        params = init_policy(HEADS, make_rng(0))
        obs = make_rng(1).standard_normal((6, OBS_DIM))
        batch_logits, batch_values = forward(params, obs)
        for i in range(6):
            logits, values = forward(params, obs[i:i + 1])
            for lb, ls in zip(batch_logits, logits):
                assert np.allclose(lb[i], ls[0], atol=1e-12)
            assert abs(batch_values[i] - values[0]) < 1e-12

    def test_wrong_feature_count_rejected(self):
        params = init_policy(HEADS, make_rng(0))
        with pytest.raises(ValueError):
            forward(params, np.zeros((2, OBS_DIM + 1)))

    def test_init_deterministic(self):
        a = init_policy(HEADS, 7)
        b = init_policy(HEADS, 7)
        for key in a.arrays:
            assert np.array_equal(a.arrays[key], b.arrays[key])


class TestSampling:
    def test_dominant_logit_wins(self):
        rng = make_rng(2)
        logits = [np.zeros((10_000, 3)), np.zeros((10_000, 3)),
                  np.zeros((10_000, 10)), np.zeros((10_000, 50))]
        logits[0][:, 1] = 20.0
        indices, _ = sample_action_batch(logits, rng)
        assert np.mean(indices[:, 0] == 1) > 0.999

    def test_joint_log_prob_self_consistent(self):
        params = init_policy(HEADS, make_rng(0))
        obs = make_rng(1).standard_normal((32, OBS_DIM))
        logits, _ = forward(params, obs)
        indices, joint = sample_action_batch(logits, make_rng(3))
        recomputed = joint_log_prob(logits, indices)
        assert np.allclose(joint, recomputed, atol=1e-12)

    def test_uniform_heads_closed_form(self):
        rng = make_rng(4)
        logits = [np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 10)),
                  np.zeros((1, 50))]
        _, joint = sample_action_batch(logits, rng)
        expected = -(math.log(3) + math.log(3) + math.log(10) + math.log(50))
        assert joint[0] == pytest.approx(expected)

    def test_action_mapping_one_based_components(self):
        params = init_policy(HEADS, make_rng(0))
        action, logp = sample_action(params, np.zeros(OBS_DIM), make_rng(5))
        assert 0 <= action.destroy_idx < 3
        assert 0 <= action.repair_idx < 3
        assert 1 <= action.severity <= 10
        assert 1 <= action.temp_level <= 50
        assert np.isfinite(logp)

    def test_sampling_frequencies_match_distribution(self):
        rng = make_rng(6)
        logits = [np.tile(np.log([0.6, 0.3, 0.1]), (40_000, 1)),
                  np.zeros((40_000, 1)), np.zeros((40_000, 10)),
                  np.zeros((40_000, 50))]
        indices, _ = sample_action_batch(logits, rng)
        freq = np.bincount(indices[:, 0], minlength=3) / 40_000
        assert np.allclose(freq, [0.6, 0.3, 0.1], atol=0.01)


class TestPrepareInputs:
    def test_stagnation_scaled_only(self):
        obs = np.array([1.0, 0.0, 1.0, 0.0, 0.5, 40.0, 0.25])
        x = prepare_inputs(obs, 100)
        assert x[0, 5] == pytest.approx(0.4)
        untouched = [0, 1, 2, 3, 4, 6]
        assert np.array_equal(x[0, untouched], obs[untouched])

    def test_input_not_mutated(self):
        obs = np.array([0.0] * 5 + [10.0, 0.0])
        prepare_inputs(obs, 100)
        assert obs[5] == 10.0


class TestGae:
    def test_telescoping_with_unit_discount(self):
        rng = make_rng(1)
        T = 8
        rewards = rng.normal(size=(T, 1))
        values = rng.normal(size=(T, 1))
        dones = np.zeros((T, 1))
        dones[-1] = 1.0
        adv, returns = gae(rewards, values, dones, gamma=1.0, lam=1.0,
                           last_values=np.array([99.0]), normalize=False)
        tail = np.cumsum(rewards[::-1])[::-1]
        assert np.allclose(adv[:, 0], tail - values[:, 0], atol=1e-12)
        assert np.allclose(returns, adv + values, atol=1e-12)

    def test_all_zero_inputs_stay_zero(self):
        adv, returns = gae(np.zeros((5, 2)), np.zeros((5, 2)), np.zeros((5, 2)),
                           0.99, 0.95, np.zeros(2))
        assert np.all(adv == 0.0)
        assert np.all(returns == 0.0)

    def test_done_stops_bootstrap(self):
        rewards = np.zeros((2, 1))
        rewards[1] = 1.0
        values = np.zeros((2, 1))
        dones = np.array([[1.0], [0.0]])
        adv, _ = gae(rewards, values, dones, gamma=0.9, lam=1.0,
                     last_values=np.array([100.0]), normalize=False)
        # episode ends at t=0, so t=0 sees neither the later reward nor V(s_1)
        assert adv[0, 0] == 0.0
        assert adv[1, 0] == pytest.approx(1.0 + 0.9 * 100.0)

    def test_normalization_zero_mean_unit_variance(self):
        rng = make_rng(2)
        adv, _ = gae(rng.normal(size=(50, 4)), rng.normal(size=(50, 4)),
                     np.zeros((50, 4)), 0.99, 0.95, rng.normal(size=4))
        assert abs(adv.mean()) < 1e-12
        assert adv.std() == pytest.approx(1.0)


class TestLossAndGrads:
    def test_replay_with_unchanged_params_gives_unit_ratios(self):
        params = init_policy(HEADS, make_rng(0))
        rng = make_rng(1)
        batch = random_batch(params, rng, logp_noise=0.0)
        _, _, metrics = loss_and_grads(params, batch, PpoConfig())
        assert metrics["clip_fraction"] == 0.0
        assert metrics["policy_loss"] == pytest.approx(-batch["advantages"].mean())

    def test_fully_clipped_positive_advantages_have_zero_policy_gradient(self):
        params = init_policy(HEADS, make_rng(0))
        rng = make_rng(2)
        cfg = PpoConfig(value_coef=0.0, entropy_coef=0.0, clip_epsilon=0.2)
        batch = random_batch(params, rng, logp_noise=0.0)
        batch["advantages"] = np.abs(batch["advantages"]) + 0.1
        # make every ratio exceed 1 + epsilon so the clipped branch is active
        batch["old_log_probs"] = batch["old_log_probs"] - math.log(1.5)
        _, grads, metrics = loss_and_grads(params, batch, cfg)
        assert metrics["clip_fraction"] == 1.0
        for key, g in grads.items():
            assert np.allclose(g, 0.0, atol=1e-12), key

    def test_gradient_check_single_draw(self):
        rng = make_rng(3)
        params = init_policy(HEADS, rng)
        batch = random_batch(params, rng, size=8)
        _, grads, _ = loss_and_grads(params, batch, PpoConfig())
        fd = finite_difference_grads(params, batch, PpoConfig())
        assert max_relative_error(grads, fd) < 1e-4

    def test_entropy_within_bounds(self):
        params = init_policy(HEADS, make_rng(0))
        rng = make_rng(4)
        batch = random_batch(params, rng)
        _, _, metrics = loss_and_grads(params, batch, PpoConfig())
        h_max = sum(math.log(s) for s in HEADS)
        assert 0.0 <= metrics["entropy"] <= h_max + 1e-9

    def test_per_head_entropy_within_bounds(self):
        params = init_policy(HEADS, make_rng(1))
        # sharpen one head so entropies spread over their ranges
        params.arrays["severity_w"] *= 50.0
        logits, _ = forward(params, make_rng(2).standard_normal((64, OBS_DIM)))
        for head, size in zip(head_distributions(logits), HEADS):
            entropy = -(head * np.log(np.maximum(head, 1e-300))).sum(axis=1)
            assert np.all(entropy >= -1e-12)
            assert np.all(entropy <= math.log(size) + 1e-9)


class TestAdamAndUpdate:
    def _buffer(self, params, rng, T=10, N=4):
        obs = rng.standard_normal((T, N, OBS_DIM))
        actions = np.stack([
            rng.integers(0, s, size=(T, N)) for s in HEADS], axis=2)
        flat_logits, values = forward(params, obs.reshape(-1, OBS_DIM))
        logp = joint_log_prob(flat_logits, actions.reshape(-1, 4)).reshape(T, N)
        rewards = (rng.random((T, N)) < 0.2) * 5.0
        dones = np.zeros((T, N))
        dones[-1] = 1.0
        return RolloutBuffer(observations=obs, actions=actions, log_probs=logp,
                             values=values.reshape(T, N), rewards=rewards,
                             dones=dones, last_values=np.zeros(N))

    def test_adam_moves_parameters(self):
        params = init_policy(HEADS, make_rng(0))
        opt = Adam(params, 1e-3)
        grads = {k: np.ones_like(v) for k, v in params.arrays.items()}
        before = params.arrays["w1"].copy()
        opt.step(params, grads)
        assert not np.allclose(before, params.arrays["w1"])
        # bias-corrected first step moves by ~learning_rate per parameter
        assert np.allclose(before - params.arrays["w1"], 1e-3, atol=1e-6)

    def test_ppo_update_improves_surrogate_on_buffer(self):
        rng = make_rng(5)
        params = init_policy(HEADS, rng)
        buffer = self._buffer(params, rng)
        metrics = ppo_update(params, Adam(params, 3e-4), buffer, PpoConfig(), rng)
        assert metrics["aborted"] == 0.0
        assert params.all_finite()
        assert metrics["value_loss"] >= 0.0

    def test_non_finite_loss_aborts_and_preserves_params(self):
        rng = make_rng(6)
        params = init_policy(HEADS, rng)
        buffer = self._buffer(params, rng)
        buffer.rewards[0, 0] = np.nan
        before = {k: v.copy() for k, v in params.arrays.items()}
        metrics = ppo_update(params, Adam(params, 3e-4), buffer, PpoConfig(), rng)
        assert metrics["aborted"] == 1.0
        for key, v in params.arrays.items():
            assert np.array_equal(before[key], v)


class TestTrain:
    def _tiny_setup(self):
        pool = [generate_routing("tsp", 8, seed=70 + i) for i in range(4)]
        env_cfg = EnvConfig(episode_length=10)
        ppo_cfg = PpoConfig(total_steps=200, horizon=10, parallel_envs=2,
                            update_epochs=2, minibatch_count=2)
        return pool, env_cfg, ppo_cfg

    def test_empty_pool_rejected(self):
        _, env_cfg, ppo_cfg = self._tiny_setup()
        with pytest.raises(ValueError):
            train([], make_search_factory("tsp", env_cfg), env_cfg, ppo_cfg, seed=0)

    def test_reproducible_traces(self):
        pool, env_cfg, ppo_cfg = self._tiny_setup()
        make_search = make_search_factory("tsp", env_cfg)
        p1, t1 = train(pool, make_search, env_cfg, ppo_cfg, seed=4)
        p2, t2 = train(pool, make_search, env_cfg, ppo_cfg, seed=4)
        assert t1.episodes == t2.episodes
        assert t1.updates == t2.updates
        for key in p1.arrays:
            assert np.array_equal(p1.arrays[key], p2.arrays[key])

    def test_episode_bookkeeping(self):
        pool, env_cfg, ppo_cfg = self._tiny_setup()
        _, trace = train(pool, make_search_factory("tsp", env_cfg), env_cfg,
                         ppo_cfg, seed=4)
        # 200 steps / (2 envs * 10-step episodes) = 20 episodes
        assert len(trace.episodes) == 20
        assert len(trace.updates) == 10
        for e in trace.episodes:
            assert e["episode_reward"] >= 0.0
            assert e["rolling_mean"] >= 0.0

    def test_head_size_mismatch_rejected(self):
        pool, env_cfg, ppo_cfg = self._tiny_setup()
        wrong = init_policy((3, 3, 10, 50), 0)  # routing needs (3, 1, ...)
        with pytest.raises(FingerprintError):
            train(pool, make_search_factory("tsp", env_cfg), env_cfg, ppo_cfg,
                  seed=0, params=wrong)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        params = init_policy(HEADS, make_rng(0))
        opt = Adam(params, 3e-4)
        opt.step(params, {k: np.ones_like(v) for k, v in params.arrays.items()})
        fp = {"problem": "opswtw", "n_destroy": 3, "n_repair": 3}
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, fp, step=123, optimizer=opt)
        loaded, meta, opt_state = load_checkpoint(path, expected_fingerprint=fp)
        assert meta["step"] == 123
        assert loaded.head_sizes == HEADS
        for key in params.arrays:
            assert np.array_equal(params.arrays[key], loaded.arrays[key])
        assert opt_state["step_count"] == 1
        restored = Adam(loaded, opt_state["learning_rate"])
        restored.load_state(opt_state)
        assert restored.step_count == 1

    def test_head_mismatch_always_rejected(self, tmp_path):
        params = init_policy(HEADS, make_rng(0))
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, {"problem": "opswtw", "n_destroy": 3,
                                       "n_repair": 3})
        wrong = {"problem": "tsp", "n_destroy": 3, "n_repair": 1}
        with pytest.raises(FingerprintError):
            load_checkpoint(path, expected_fingerprint=wrong)
        with pytest.raises(FingerprintError):
            load_checkpoint(path, expected_fingerprint=wrong, allow_transfer=True)

    def test_cross_problem_requires_allow_transfer(self, tmp_path):
        params = init_policy((3, 1, 10, 50), make_rng(0))
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, {"problem": "tsp", "n_destroy": 3,
                                       "n_repair": 1})
        mtsp = {"problem": "mtsp", "n_destroy": 3, "n_repair": 1}
        with pytest.raises(FingerprintError):
            load_checkpoint(path, expected_fingerprint=mtsp)
        loaded, _, _ = load_checkpoint(path, expected_fingerprint=mtsp,
                                       allow_transfer=True)
        assert loaded.head_sizes == (3, 1, 10, 50)
