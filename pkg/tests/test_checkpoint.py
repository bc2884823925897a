import numpy as np
import pytest

from so2rl.checkpoint import (
    CheckpointError,
    config_fingerprint,
    load_checkpoint,
    save_checkpoint,
)
from so2rl.envs import make_env
from so2rl.trainer import So2Config, finetune_epoch, init_train_state


def trained_state(seed=0):
    env = make_env("point-mass")
    cfg = So2Config(n_ensemble=2, batch_size=8, hidden=(8, 8), n_upc=2,
                    policy_upc=2)
    state = init_train_state(env, cfg, seed)
    for _ in range(3):
        finetune_epoch(state, env, cfg)
    return state


def save_state(state, path, fingerprint="fp"):
    save_checkpoint(path, state.policy, state.ensemble, state.coef,
                    state.actor_opt, state.critic_opts, fingerprint)


def test_fingerprint_stable_and_order_insensitive():
    a = config_fingerprint({"env": "point-mass", "hidden": (8, 8), "n": 2})
    b = config_fingerprint({"n": 2, "hidden": (8, 8), "env": "point-mass"})
    assert a == b
    assert len(a) == 64
    assert a != config_fingerprint({"env": "pendulum", "hidden": (8, 8), "n": 2})


def test_round_trip_bitwise(tmp_path):
    state = trained_state()
    path = tmp_path / "ckpt.bin"
    save_state(state, path)
    policy, ensemble, coef, actor_opt, critic_opts, fp = load_checkpoint(path)
    assert fp == "fp"
    assert policy.action_dim == state.policy.action_dim
    assert policy.log_std_min == state.policy.log_std_min
    for a, b in zip(policy.trunk.weights, state.policy.trunk.weights):
        np.testing.assert_array_equal(a, b)
    assert policy.trunk.activations == state.policy.trunk.activations
    for loaded, orig in zip(ensemble.online + ensemble.target,
                            state.ensemble.online + state.ensemble.target):
        for a, b in zip(loaded.weights + loaded.biases,
                        orig.weights + orig.biases):
            np.testing.assert_array_equal(a, b)
    assert coef.mode == state.coef.mode
    assert coef.log_beta == state.coef.log_beta
    assert coef.adam_t == state.coef.adam_t
    assert actor_opt.t == state.actor_opt.t
    for a, b in zip(actor_opt.m_w, state.actor_opt.m_w):
        np.testing.assert_array_equal(a, b)
    for lo, so in zip(critic_opts, state.critic_opts):
        assert lo.t == so.t
        for a, b in zip(lo.v_w, so.v_w):
            np.testing.assert_array_equal(a, b)


def test_save_load_save_bytes_identical(tmp_path):
    state = trained_state(1)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_state(state, p1)
    policy, ensemble, coef, actor_opt, critic_opts, fp = load_checkpoint(p1)
    save_checkpoint(p2, policy, ensemble, coef, actor_opt, critic_opts, fp)
    assert p1.read_bytes() == p2.read_bytes()


def test_resumed_training_matches_uninterrupted(tmp_path):
    # save/load in the middle of training must not change the trajectory of
    # network parameters (RNG streams are managed by the caller)
    env = make_env("point-mass")
    cfg = So2Config(n_ensemble=2, batch_size=8, hidden=(8, 8), n_upc=1,
                    policy_upc=1)
    a = init_train_state(env, cfg, 5)
    for _ in range(2):
        finetune_epoch(a, env, cfg)
    path = tmp_path / "mid.bin"
    save_state(a, path)
    policy, ensemble, coef, actor_opt, critic_opts, _ = load_checkpoint(path)
    b = init_train_state(make_env("point-mass"), cfg, 5)
    b.policy, b.ensemble, b.coef = policy, ensemble, coef
    b.actor_opt, b.critic_opts = actor_opt, critic_opts
    # replay a's RNG streams and buffers into b so only the checkpointed
    # pieces differ
    b.rng_collect = a.rng_collect
    b.rng_batch = a.rng_batch
    b.rng_perturb = a.rng_perturb
    b.on_buffer = a.on_buffer
    b._episode_state = a._episode_state
    import copy

    a2 = copy.deepcopy(a)
    env_a2 = copy.deepcopy(env)  # each run gets its own mid-episode env clone
    env_b = copy.deepcopy(env)
    finetune_epoch(a2, env_a2, cfg)
    finetune_epoch(b, env_b, cfg)
    for x, y in zip(a2.policy.trunk.weights, b.policy.trunk.weights):
        np.testing.assert_array_equal(x, y)


def test_fingerprint_mismatch_rejected(tmp_path):
    state = trained_state(2)
    path = tmp_path / "ckpt.bin"
    save_state(state, path, fingerprint="aaaa" * 16)
    with pytest.raises(CheckpointError, match="fingerprint mismatch"):
        load_checkpoint(path, expect_fingerprint="bbbb" * 16)
    # no expectation: loads fine
    load_checkpoint(path)
    # matching expectation: loads fine
    load_checkpoint(path, expect_fingerprint="aaaa" * 16)


def test_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"WXYZ" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)
    state = trained_state(3)
    good = tmp_path / "good.bin"
    save_state(state, good)
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(good.read_bytes()[:200])
    with pytest.raises((CheckpointError, Exception)):
        load_checkpoint(trunc)


def test_unsupported_version(tmp_path):
    state = trained_state(4)
    path = tmp_path / "v.bin"
    save_state(state, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
