import numpy as np
import pytest

from so2rl.envs import EpisodeOverError, PendulumEnv, PointMassEnv, make_env


def test_point_mass_zero_action_from_origin():
    env = PointMassEnv()
    env.reset(0)
    env.pos[:] = 0.0
    env.vel[:] = 0.0
    for _ in range(5):
        state, reward, terminated, truncated = env.step(np.zeros(2))
        np.testing.assert_array_equal(state, np.zeros(4))
        assert reward == pytest.approx(-np.sqrt(2.0))
        assert not terminated


def test_point_mass_hand_integrated_step():
    env = PointMassEnv()
    env.reset(0)
    env.pos[:] = [0.2, -0.1]
    env.vel[:] = [1.0, 0.5]
    action = np.array([0.5, -0.5])
    state, reward, _, _ = env.step(action)
    pos = np.array([0.2 + 1.0 * 0.05, -0.1 + 0.5 * 0.05])
    vel = np.array([1.0 + 0.5 * 0.05 - 0.1 * 1.0 * 0.05,
                    0.5 - 0.5 * 0.05 - 0.1 * 0.5 * 0.05])
    np.testing.assert_allclose(state, np.concatenate([pos, vel]), atol=1e-15)
    expected = -np.linalg.norm(pos - [1.0, 1.0]) - 0.01 * 0.5
    assert reward == pytest.approx(expected, abs=1e-15)


def test_pendulum_upright_equilibrium():
    env = PendulumEnv()
    env.reset(0)
    env.theta = 0.0
    env.theta_dot = 0.0
    state, reward, _, _ = env.step(np.zeros(1))
    np.testing.assert_allclose(state, [1.0, 0.0, 0.0], atol=1e-15)
    assert reward == 0.0


def test_trajectory_determinism():
    for name in ("point-mass", "pendulum"):
        a, b = make_env(name), make_env(name)
        rng = np.random.default_rng(10)
        actions = rng.uniform(-1, 1, (50, a.spec.action_dim))
        sa, sb = a.reset(7), b.reset(7)
        np.testing.assert_array_equal(sa, sb)
        for act in actions:
            ra, rb = a.step(act), b.step(act)
            np.testing.assert_array_equal(ra[0], rb[0])
            assert ra[1] == rb[1]


def test_episode_truncates_never_terminates():
    env = make_env("point-mass")
    env.reset(0)
    for t in range(env.spec.max_episode_steps):
        _, _, terminated, truncated = env.step(np.zeros(2))
        assert not terminated
        assert truncated == (t == env.spec.max_episode_steps - 1)
    with pytest.raises(EpisodeOverError):
        env.step(np.zeros(2))


def test_step_before_reset_errors():
    with pytest.raises(EpisodeOverError, match="reset"):
        PointMassEnv().step(np.zeros(2))


def test_rewards_within_declared_range():
    rng = np.random.default_rng(11)
    for name in ("point-mass", "pendulum"):
        env = make_env(name)
        lo, hi = env.spec.reward_range
        for ep in range(3):
            env.reset(ep)
            done = False
            while not done:
                _, r, terminated, truncated = env.step(
                    rng.uniform(-1, 1, env.spec.action_dim))
                assert lo <= r <= hi
                done = terminated or truncated


def test_out_of_bounds_action_clamped():
    env = PointMassEnv()
    env.reset(0)
    env.pos[:] = 0.0
    env.vel[:] = 0.0
    _, r_clamped, _, _ = env.step(np.array([2.0, 0.0]))
    env2 = PointMassEnv()
    env2.reset(0)
    env2.pos[:] = 0.0
    env2.vel[:] = 0.0
    _, r_unit, _, _ = env2.step(np.array([1.0, 0.0]))
    assert r_clamped == r_unit


def test_unknown_env_name():
    with pytest.raises(ValueError, match="unknown env"):
        make_env("cartpole")
