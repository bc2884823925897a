"""Tanh-squashed Gaussian policy and Q-ensemble with target networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    Mlp,
    ShapeError,
    _forward_cached,
    backward_batch,
    backward_from_cache,
    forward_batch,
    mlp_init,
)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class SquashedGaussianPolicy:
    """State -> (mean, log_std) trunk with tanh squashing onto [-1, 1]^action_dim."""

    trunk: Mlp
    action_dim: int
    log_std_min: float = LOG_STD_MIN
    log_std_max: float = LOG_STD_MAX

    def __post_init__(self):
        if self.trunk.output_dim != 2 * self.action_dim:
            raise ShapeError(
                f"trunk output dim {self.trunk.output_dim} != 2*action_dim {2 * self.action_dim}"
            )


@dataclass
class QEnsemble:
    """N online critics with matching target copies over concat(state, action)."""

    online: list[Mlp]
    target: list[Mlp]

    def __post_init__(self):
        if len(self.online) != len(self.target) or not self.online:
            raise ShapeError("online/target member counts must match and be nonempty")

    @property
    def n_members(self) -> int:
        return len(self.online)


@dataclass
class EntropyCoefficient:
    """Fixed or auto-tuned temperature for the entropy bonus.

    In auto mode log_beta carries its own scalar Adam state so temperature
    tuning is robust to the scale of the log-prob error signal.
    """

    mode: str = "auto"  # "auto" | "fixed"
    log_beta: float = 0.0
    target_entropy: float = -1.0
    lr: float = 3e-4
    adam_m: float = 0.0
    adam_v: float = 0.0
    adam_t: int = 0

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta))


def make_policy(state_dim: int, action_dim: int, hidden: tuple[int, ...],
                rng: np.random.Generator) -> SquashedGaussianPolicy:
    dims = [state_dim, *hidden, 2 * action_dim]
    acts = ["relu"] * len(hidden) + ["identity"]
    return SquashedGaussianPolicy(mlp_init(dims, acts, rng), action_dim)


def make_ensemble(state_dim: int, action_dim: int, hidden: tuple[int, ...],
                  n_members: int, rng: np.random.Generator) -> QEnsemble:
    dims = [state_dim + action_dim, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["identity"]
    online = [mlp_init(dims, acts, rng) for _ in range(n_members)]
    target = [m.copy() for m in online]
    return QEnsemble(online, target)


def policy_forward(policy: SquashedGaussianPolicy, states: np.ndarray):
    """Trunk heads on a [B, state_dim] batch: (mu [B,A], clamped log_std [B,A])."""
    out = forward_batch(policy.trunk, states)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite policy network output")
    mu = out[:, : policy.action_dim]
    log_std = np.clip(out[:, policy.action_dim:], policy.log_std_min, policy.log_std_max)
    return mu, log_std


def _squash_log_prob(u: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    # Gaussian log-density of u minus the tanh change-of-variables correction.
    z = (u - mu) * np.exp(-log_std)
    gauss = -0.5 * z * z - _HALF_LOG_2PI - log_std
    correction = np.log(1.0 - np.tanh(u) ** 2 + TANH_EPS)
    return (gauss - correction).sum(axis=-1)


def policy_sample_cached(policy: SquashedGaussianPolicy, states: np.ndarray,
                         rng: np.random.Generator):
    """Reparametrized batch sample keeping the trunk forward cache.

    Returns (actions, log_probs, z, (pre, post)); the cache feeds
    actor_gradients so the trunk is run once per actor step.
    """
    states = np.asarray(states, dtype=np.float64)
    pre, post = _forward_cached(policy.trunk, states)
    out = post[-1]
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite policy network output")
    mu = out[:, : policy.action_dim]
    log_std = np.clip(out[:, policy.action_dim:], policy.log_std_min, policy.log_std_max)
    z = rng.standard_normal(mu.shape)
    u = mu + np.exp(log_std) * z
    actions = np.tanh(u)
    log_probs = _squash_log_prob(u, mu, log_std)
    return actions, log_probs, z, (pre, post)


def policy_sample_batch(policy: SquashedGaussianPolicy, states: np.ndarray,
                        rng: np.random.Generator):
    """Reparametrized sample per row: (actions [B,A], log_probs [B], noise z [B,A])."""
    actions, log_probs, z, _ = policy_sample_cached(policy, states, rng)
    return actions, log_probs, z


def policy_sample(policy: SquashedGaussianPolicy, state: np.ndarray,
                  rng: np.random.Generator):
    """Single-state stochastic action: (action [A], log_prob scalar)."""
    actions, log_probs, _ = policy_sample_batch(policy, np.asarray(state, dtype=np.float64)[None, :], rng)
    return actions[0], float(log_probs[0])


def policy_mean_action(policy: SquashedGaussianPolicy, state: np.ndarray) -> np.ndarray:
    """Deterministic action tanh(mu(state)); used for evaluation rollouts."""
    mu, _ = policy_forward(policy, np.asarray(state, dtype=np.float64)[None, :])
    return np.tanh(mu[0])


def log_prob_of(policy: SquashedGaussianPolicy, states: np.ndarray,
                u: np.ndarray) -> np.ndarray:
    """Log-density of pre-squash values u under the policy at the given states."""
    mu, log_std = policy_forward(policy, states)
    return _squash_log_prob(u, mu, log_std)


def q_values(ensemble: QEnsemble, which: str, states: np.ndarray,
             actions: np.ndarray) -> np.ndarray:
    """Per-member Q at concat(state, action): [B, N], member order preserved."""
    members = _pick(ensemble, which)
    x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
    return np.column_stack([forward_batch(m, x)[:, 0] for m in members])


def q_min(ensemble: QEnsemble, which: str, states: np.ndarray,
          actions: np.ndarray) -> np.ndarray:
    """Minimum over ensemble members, [B]."""
    return q_values(ensemble, which, states, actions).min(axis=1)


def _pick(ensemble: QEnsemble, which: str) -> list[Mlp]:
    if which == "online":
        return ensemble.online
    if which == "target":
        return ensemble.target
    raise ValueError(f"which must be 'online' or 'target', got {which!r}")


def polyak_update(ensemble: QEnsemble, rho: float) -> QEnsemble:
    """target <- rho*target + (1-rho)*online, elementwise, in place."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    for online, target in zip(ensemble.online, ensemble.target):
        for tw, ow in zip(target.weights, online.weights):
            tw *= rho
            tw += (1.0 - rho) * ow
        for tb, ob in zip(target.biases, online.biases):
            tb *= rho
            tb += (1.0 - rho) * ob
    return ensemble


def update_entropy_coefficient(coef: EntropyCoefficient,
                               batch_log_probs: np.ndarray) -> EntropyCoefficient:
    """One Adam step on log_beta toward the target entropy; no-op in fixed mode."""
    if coef.mode == "fixed":
        return coef
    # d/dlog_beta of mean(log_beta * (-log_prob - target_entropy))
    grad = float(np.mean(-np.asarray(batch_log_probs) - coef.target_entropy))
    coef.adam_t += 1
    coef.adam_m = 0.9 * coef.adam_m + 0.1 * grad
    coef.adam_v = 0.999 * coef.adam_v + 0.001 * grad * grad
    m_hat = coef.adam_m / (1.0 - 0.9 ** coef.adam_t)
    v_hat = coef.adam_v / (1.0 - 0.999 ** coef.adam_t)
    coef.log_beta -= coef.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    return coef


def actor_gradients(policy: SquashedGaussianPolicy, states: np.ndarray,
                    z: np.ndarray, d_action: np.ndarray, d_log_prob: np.ndarray,
                    cache=None):
    """Backprop the actor objective through the reparametrized sample.

    Given fixed noise z, the action is a = tanh(mu + exp(log_std) * z).
    d_action [B,A] and d_log_prob [B] are the upstream derivatives of the
    scalar objective w.r.t. each action component and each row's log-prob.
    cache is the (pre, post) pair from policy_sample_cached, avoiding a
    second trunk forward pass. Returns the GradientBundle for the trunk.
    """
    if cache is None:
        cache = _forward_cached(policy.trunk, np.asarray(states, dtype=np.float64))
    pre, post = cache
    out = post[-1]
    mu = out[:, : policy.action_dim]
    raw = out[:, policy.action_dim:]
    log_std = np.clip(raw, policy.log_std_min, policy.log_std_max)
    std = np.exp(log_std)
    u = mu + std * z
    t = np.tanh(u)
    one_m_t2 = 1.0 - t * t

    # partials of the per-dim log-prob term
    dlp_du = -z / std + 2.0 * t * one_m_t2 / (one_m_t2 + TANH_EPS)
    dlp_dmu_direct = z / std
    dlp_dlogstd_direct = z * z - 1.0

    da = d_action * one_m_t2                       # dJ/du through the action path
    dlp = d_log_prob[:, None]                      # dJ/d(log-prob of the row)
    d_mu = da + dlp * (dlp_du + dlp_dmu_direct)
    d_logstd = da * std * z + dlp * (dlp_du * std * z + dlp_dlogstd_direct)

    # clamp on log_std: zero gradient where the raw head value was clipped
    clipped = (raw <= policy.log_std_min) | (raw >= policy.log_std_max)
    d_logstd = np.where(clipped, 0.0, d_logstd)

    upstream = np.concatenate([d_mu, d_logstd], axis=1)
    return backward_from_cache(policy.trunk, pre, post, upstream)
