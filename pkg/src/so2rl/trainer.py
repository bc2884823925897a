"""SO2 finetuning: perturbed value update, high-frequency critic training,
and offline pretraining on an ensemble soft actor-critic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .actor_critic import (
    EntropyCoefficient,
    QEnsemble,
    SquashedGaussianPolicy,
    actor_gradients,
    make_ensemble,
    make_policy,
    policy_mean_action,
    policy_sample,
    policy_sample_batch,
    policy_sample_cached,
    polyak_update,
    q_values,
    update_entropy_coefficient,
)
from .nn import AdamState, _forward_cached, adam_init, adam_step, backward_from_cache
from .replay import Batch, ReplayBuffer, Transition, sample_union

TARGET_MODES = ("min_ensemble", "independent")


@dataclass
class So2Config:
    gamma: float = 0.99
    rho: float = 0.995               # target keeps rho, moves (1-rho) toward online
    sigma: float = 0.3               # target-action noise std
    clip: float = 0.6                # noise clip bound c
    n_upc: int = 10                  # critic updates per collected transition
    policy_upc: int = 10             # actor updates per collected transition
    batch_size: int = 256
    n_ensemble: int = 10
    target_mode: str = "min_ensemble"
    entropy_mode: str = "auto"       # "auto" | "fixed"
    beta: float = 0.2                # initial (auto) or constant (fixed) temperature
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    hidden: tuple[int, ...] = (256, 256)
    online_capacity: int = 1_000_000
    eval_interval: int = 1000
    eval_episodes: int = 5
    total_env_steps: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.sigma < 0.0 or self.clip <= 0.0:
            raise ValueError("sigma must be >= 0 and clip > 0")
        if self.n_upc < 1 or self.policy_upc < 0:
            raise ValueError("n_upc >= 1 and policy_upc >= 0 required")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"target_mode must be one of {TARGET_MODES}")


@dataclass
class TrainState:
    policy: SquashedGaussianPolicy
    ensemble: QEnsemble
    coef: EntropyCoefficient
    actor_opt: AdamState
    critic_opts: list[AdamState]
    off_buffer: ReplayBuffer
    on_buffer: ReplayBuffer
    rng_collect: np.random.Generator
    rng_batch: np.random.Generator
    rng_perturb: np.random.Generator
    env_steps: int = 0
    grad_steps: int = 0
    # instrumentation for loop-accounting checks
    n_critic_steps: int = 0
    n_actor_steps: int = 0
    n_polyak_updates: int = 0
    # episode bookkeeping for the collector
    _episode_state: np.ndarray | None = None
    _episode_seed: int = 0


def init_train_state(env, cfg: So2Config, seed: int,
                     off_buffer: ReplayBuffer | None = None) -> TrainState:
    """Fresh networks, optimizers, buffers, and the three RNG streams."""
    ss = np.random.SeedSequence(seed)
    s_init, s_collect, s_batch, s_perturb = ss.spawn(4)
    rng_init = np.random.default_rng(s_init)
    state_dim, action_dim = env.spec.state_dim, env.spec.action_dim
    policy = make_policy(state_dim, action_dim, cfg.hidden, rng_init)
    ensemble = make_ensemble(state_dim, action_dim, cfg.hidden, cfg.n_ensemble, rng_init)
    coef = EntropyCoefficient(
        mode=cfg.entropy_mode,
        log_beta=float(np.log(cfg.beta)),
        target_entropy=-float(action_dim),
        lr=cfg.actor_lr,
    )
    if off_buffer is None:
        off_buffer = ReplayBuffer(1, state_dim, action_dim)
    return TrainState(
        policy=policy,
        ensemble=ensemble,
        coef=coef,
        actor_opt=adam_init(policy.trunk, cfg.actor_lr),
        critic_opts=[adam_init(m, cfg.critic_lr) for m in ensemble.online],
        off_buffer=off_buffer,
        on_buffer=ReplayBuffer(cfg.online_capacity, state_dim, action_dim),
        rng_collect=np.random.default_rng(s_collect),
        rng_batch=np.random.default_rng(s_batch),
        rng_perturb=np.random.default_rng(s_perturb),
    )


def perturb_action(actions: np.ndarray, sigma: float, clip: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Add clipped Gaussian noise, then clamp back into the action box.

    sigma=0 returns the input unchanged and consumes no RNG draws, so noise
    ablations leave every other random stream untouched.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if sigma == 0.0:
        return actions.copy()
    eps = np.clip(rng.normal(0.0, sigma, size=actions.shape), -clip, clip)
    return np.clip(actions + eps, -1.0, 1.0)


def compute_target(batch: Batch, ensemble: QEnsemble, policy: SquashedGaussianPolicy,
                   coef: EntropyCoefficient, cfg: So2Config,
                   rng: np.random.Generator) -> np.ndarray:
    """Perturbed Bellman targets.

    Per row: sample a' ~ pi(.|s') with its log-prob, perturb a' for the
    target-critic query, and bootstrap gamma*(1-done)*(Q_target - beta*logp).
    min_ensemble mode returns [B]; independent mode returns [B, N] with each
    member bootstrapping from its own target network. No gradient flows back.
    """
    next_actions, log_probs, _ = policy_sample_batch(policy, batch.next_states, rng)
    noisy_actions = perturb_action(next_actions, cfg.sigma, cfg.clip, rng)
    qs = q_values(ensemble, "target", batch.next_states, noisy_actions)  # [B, N]
    beta = coef.beta
    not_done = 1.0 - batch.dones
    if cfg.target_mode == "min_ensemble":
        boot = qs.min(axis=1) - beta * log_probs
        targets = batch.rewards + cfg.gamma * not_done * boot
    else:
        boot = qs - beta * log_probs[:, None]
        targets = batch.rewards[:, None] + cfg.gamma * not_done[:, None] * boot
    finite_rows = np.isfinite(targets).reshape(len(batch), -1).all(axis=1)
    if not finite_rows.all():
        raise ValueError(f"non-finite target at batch row {int(np.argmin(finite_rows))}")
    return targets


def critic_step(batch: Batch, targets: np.ndarray, state: TrainState,
                cfg: So2Config) -> float:
    """One Adam step per ensemble member on the mean squared Bellman error."""
    x = np.concatenate([batch.states, batch.actions], axis=1)
    n = state.ensemble.n_members
    b = len(batch)
    losses = []
    for i, (member, opt) in enumerate(zip(state.ensemble.online, state.critic_opts)):
        y = targets if targets.ndim == 1 else targets[:, i]
        pre, post = _forward_cached(member, x)
        err = post[-1][:, 0] - y
        loss = float(np.mean(err * err))
        if not np.isfinite(loss):
            raise ValueError(f"non-finite critic loss for member {i}")
        upstream = (2.0 / b) * err[:, None]
        grads = backward_from_cache(member, pre, post, upstream)
        adam_step(member, grads, opt)
        losses.append(loss)
    state.n_critic_steps += 1
    return float(np.mean(losses))


def actor_step(batch: Batch, state: TrainState, cfg: So2Config) -> float:
    """Ascend mean(min_j Q_j(s, a~) - beta*logp(a~|s)) with reparametrized a~.

    Critic parameters are read but never written. Returns the objective value
    before the step; auto entropy tuning happens afterwards on the same
    log-probs.
    """
    policy, ensemble = state.policy, state.ensemble
    actions, log_probs, z, trunk_cache = policy_sample_cached(
        policy, batch.states, state.rng_batch)
    b = len(batch)
    beta = state.coef.beta

    x = np.concatenate([batch.states, actions], axis=1)
    caches = [_forward_cached(m, x) for m in ensemble.online]
    qs = np.column_stack([post[-1][:, 0] for _, post in caches])  # [B, N]
    argmin = qs.argmin(axis=1)
    objective = float(np.mean(qs.min(axis=1) - beta * log_probs))
    if not np.isfinite(objective):
        raise ValueError("non-finite actor objective")

    # dJ/da flows only through each row's argmin member
    d_action = np.zeros_like(actions)
    sdim = batch.states.shape[1]
    for i, member in enumerate(ensemble.online):
        rows = argmin == i
        if not np.any(rows):
            continue
        pre, post = caches[i]
        g = backward_from_cache(member, pre, post, (argmin == i)[:, None].astype(np.float64))
        d_action[rows] = g.input_grad[rows, sdim:]

    # gradient of the minimized loss L = -J
    d_action *= -1.0 / b
    d_log_prob = np.full(b, beta / b)
    grads = actor_gradients(policy, batch.states, z, d_action, d_log_prob,
                            cache=trunk_cache)
    adam_step(policy.trunk, grads, state.actor_opt)
    update_entropy_coefficient(state.coef, log_probs)
    state.n_actor_steps += 1
    return objective


def _collect_step(state: TrainState, env, cfg: So2Config) -> None:
    """One stochastic-policy environment step pushed into the online buffer."""
    if state._episode_state is None:
        seed = int(state.rng_collect.integers(0, 2**31 - 1))
        state._episode_seed = seed
        state._episode_state = env.reset(seed)
    s = state._episode_state
    action, _ = policy_sample(state.policy, s, state.rng_collect)
    s_next, reward, terminated, truncated = env.step(action)
    # done excludes time-limit truncation so bootstrapping continues through it
    state.on_buffer.push(Transition(s, action, reward, s_next, terminated))
    state._episode_state = None if (terminated or truncated) else s_next
    state.env_steps += 1


def finetune_epoch(state: TrainState, env, cfg: So2Config) -> dict:
    """One Algorithm-1 epoch: collect one transition, then n_upc update rounds.

    Each round samples a fresh union batch, does a critic update, an actor
    update when scheduled (interleaved evenly when policy_upc < n_upc), and a
    Polyak target update.
    """
    _collect_step(state, env, cfg)
    critic_losses, actor_objs = [], []
    for k in range(1, cfg.n_upc + 1):
        batch = sample_union(state.off_buffer, state.on_buffer, cfg.batch_size,
                             state.rng_batch)
        targets = compute_target(batch, state.ensemble, state.policy, state.coef,
                                 cfg, state.rng_perturb)
        critic_losses.append(critic_step(batch, targets, state, cfg))
        do_actor = (k * cfg.policy_upc) // cfg.n_upc - ((k - 1) * cfg.policy_upc) // cfg.n_upc
        if do_actor:
            actor_objs.append(actor_step(batch, state, cfg))
        polyak_update(state.ensemble, cfg.rho)
        state.n_polyak_updates += 1
        state.grad_steps += 1
    return {
        "env_step": state.env_steps,
        "grad_step": state.grad_steps,
        "critic_loss": float(np.mean(critic_losses)),
        "actor_objective": float(np.mean(actor_objs)) if actor_objs else float("nan"),
        "beta": state.coef.beta,
        "off_size": state.off_buffer.size,
        "on_size": state.on_buffer.size,
    }


def pretrain(dataset: ReplayBuffer, steps: int, env, cfg: So2Config,
             seed: int) -> TrainState:
    """Offline pretraining: SAC-N updates on the dataset, no perturbation noise."""
    if dataset.size == 0:
        raise ValueError("pretrain requires a nonempty dataset")
    state = init_train_state(env, cfg, seed, off_buffer=dataset)
    pre_cfg = replace(cfg, sigma=0.0, target_mode="min_ensemble")
    empty_on = state.on_buffer
    for _ in range(steps):
        batch = sample_union(state.off_buffer, empty_on, cfg.batch_size, state.rng_batch)
        targets = compute_target(batch, state.ensemble, state.policy, state.coef,
                                 pre_cfg, state.rng_perturb)
        critic_step(batch, targets, state, pre_cfg)
        actor_step(batch, state, pre_cfg)
        polyak_update(state.ensemble, cfg.rho)
        state.n_polyak_updates += 1
        state.grad_steps += 1
    return state


def evaluate(policy: SquashedGaussianPolicy, env, episodes: int,
             seed: int) -> tuple[float, float]:
    """Deterministic mean-action rollouts; (mean, std) of undiscounted returns."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns = []
    for ep in range(episodes):
        s = env.reset(seed + ep)
        total = 0.0
        while True:
            s, r, terminated, truncated = env.step(policy_mean_action(policy, s))
            total += r
            if terminated or truncated:
                break
        returns.append(total)
    returns = np.array(returns)
    return float(returns.mean()), float(returns.std())
