"""Built-in deterministic toy continuous-control environments.

Both environments use the action box [-1, 1]^action_dim, fixed-length
episodes (time-limit truncation only, never a genuine terminal), and fully
seeded resets, so trajectories replay bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EpisodeOverError(RuntimeError):
    """step() called after the episode ended without an intervening reset()."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    max_episode_steps: int
    reward_range: tuple[float, float]
    description: str


class _ToyEnv:
    spec: EnvSpec

    def __init__(self):
        self._t: int | None = None  # None until reset

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray):
        """Returns (next_state, reward, terminated, truncated)."""
        if self._t is None:
            raise EpisodeOverError(f"{self.spec.name}: step() before reset()")
        if self._t >= self.spec.max_episode_steps:
            raise EpisodeOverError(f"{self.spec.name}: episode over, call reset()")
        action = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(action) > 1.0):
            action = np.clip(action, -1.0, 1.0)
        state, reward = self._dynamics(action)
        lo, hi = self.spec.reward_range
        assert lo <= reward <= hi, f"reward {reward} outside {self.spec.reward_range}"
        self._t += 1
        truncated = self._t >= self.spec.max_episode_steps
        return state, reward, False, truncated

    def _dynamics(self, action: np.ndarray):
        raise NotImplementedError


class PointMassEnv(_ToyEnv):
    """2-D point mass pushed toward a fixed goal at (1, 1).

    x <- x + v*dt, then v <- v + a*dt - friction*v*dt, with dt=0.05 and
    friction=0.1. Reward is -||pos - goal|| - 0.01*||a||^2. Terminal speed is
    1/friction = 10 per axis, which bounds the reachable distance over a
    200-step episode and hence the reward range.
    """

    DT = 0.05
    FRICTION = 0.1
    GOAL = np.array([1.0, 1.0])

    spec = EnvSpec(
        name="point-mass",
        state_dim=4,
        action_dim=2,
        max_episode_steps=200,
        reward_range=(-(150.0 + 0.02), 0.0),
        description="position+velocity point mass, dt=0.05, friction=0.1, goal (1,1)",
    )

    def __init__(self):
        super().__init__()
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.pos = rng.uniform(-0.1, 0.1, size=2)
        self.vel = np.zeros(2)
        self._t = 0
        return self._state()

    def _state(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def _dynamics(self, action: np.ndarray):
        self.pos = self.pos + self.vel * self.DT
        self.vel = self.vel + action * self.DT - self.FRICTION * self.vel * self.DT
        reward = -float(np.linalg.norm(self.pos - self.GOAL)) - 0.01 * float(action @ action)
        return self._state(), reward


class PendulumEnv(_ToyEnv):
    """Torque-limited pendulum swing-up; state (cos th, sin th, th_dot).

    theta = 0 is upright. Torque is the action scaled to [-2, 2]. Angular
    velocity is clamped to [-8, 8]. Reward -(th^2 + 0.1*th_dot^2 +
    0.001*torque^2) with th wrapped to [-pi, pi].
    """

    DT = 0.05
    MAX_TORQUE = 2.0
    MAX_SPEED = 8.0
    G = 10.0
    M = 1.0
    L = 1.0

    spec = EnvSpec(
        name="pendulum",
        state_dim=3,
        action_dim=1,
        max_episode_steps=200,
        reward_range=(-(np.pi ** 2 + 6.4 + 0.004), 0.0),
        description="pendulum swing-up, dt=0.05, torque bound 2.0, speed clamp 8.0",
    )

    def __init__(self):
        super().__init__()
        self.theta = 0.0
        self.theta_dot = 0.0

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.theta = rng.uniform(-np.pi, np.pi)
        self.theta_dot = rng.uniform(-1.0, 1.0)
        self._t = 0
        return self._state()

    def _state(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta), self.theta_dot])

    @staticmethod
    def _wrap(angle: float) -> float:
        return float((angle + np.pi) % (2.0 * np.pi) - np.pi)

    def _dynamics(self, action: np.ndarray):
        torque = float(action[0]) * self.MAX_TORQUE
        th = self._wrap(self.theta)
        reward = -(th * th + 0.1 * self.theta_dot ** 2 + 0.001 * torque * torque)
        accel = (3.0 * self.G / (2.0 * self.L) * np.sin(self.theta)
                 + 3.0 / (self.M * self.L ** 2) * torque)
        self.theta_dot = float(np.clip(self.theta_dot + accel * self.DT,
                                       -self.MAX_SPEED, self.MAX_SPEED))
        self.theta = self.theta + self.theta_dot * self.DT
        return self._state(), reward


ENVS = {
    "point-mass": PointMassEnv,
    "pendulum": PendulumEnv,
}


def make_env(name: str) -> _ToyEnv:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown env {name!r}; available: {sorted(ENVS)}") from None
