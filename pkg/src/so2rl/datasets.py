"""Tiered offline dataset generation for the built-in environments.

Mirrors the random / medium / medium-replay / expert construction at desk
scale: expert comes from an online soft actor-critic reference run, medium
from an early checkpoint of that run, and medium-replay from the
chronological replay buffer of the run. Everything is reproducible from the
seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .actor_critic import policy_sample
from .envs import make_env
from .replay import ReplayBuffer, Transition, sample_union, save_dataset
from .trainer import (
    So2Config,
    actor_step,
    compute_target,
    critic_step,
    evaluate,
    init_train_state,
    polyak_update,
)

TIERS = ("random", "medium", "medium_replay", "expert")


class TierGenerationError(RuntimeError):
    """The reference run did not reach the expert return threshold."""


@dataclass(frozen=True)
class ReferenceRunSpec:
    """Online-SAC reference training used to produce expert/medium policies."""

    budget: int            # total environment steps
    warmup: int            # uniform-random steps before any update
    eval_every: int
    eval_episodes: int
    expert_floor: float    # minimum acceptable converged return

    config: So2Config = None  # filled per env below


def _desk_config() -> So2Config:
    return So2Config(
        sigma=0.0, n_upc=1, policy_upc=1, n_ensemble=2,
        batch_size=128, hidden=(64, 64), eval_interval=10**9,
    )


REFERENCE_RUNS = {
    "point-mass": ReferenceRunSpec(budget=12000, warmup=1000, eval_every=1000,
                                   eval_episodes=5, expert_floor=-120.0,
                                   config=_desk_config()),
    "pendulum": ReferenceRunSpec(budget=30000, warmup=2000, eval_every=1000,
                                 eval_episodes=5, expert_floor=-600.0,
                                 config=_desk_config()),
}


def _online_reference_run(env_name: str, seed: int):
    """Train online SAC from scratch; returns (snapshots, chronological buffer).

    snapshots is a list of (env_step, mean_return, policy) taken every
    eval_every steps.
    """
    spec = REFERENCE_RUNS[env_name]
    cfg = spec.config
    env = make_env(env_name)
    eval_env = make_env(env_name)
    state = init_train_state(env, cfg, seed)
    snapshots = []
    episode_state = None
    for step in range(1, spec.budget + 1):
        if episode_state is None:
            episode_state = env.reset(int(state.rng_collect.integers(0, 2**31 - 1)))
        if step <= spec.warmup:
            action = state.rng_collect.uniform(-1.0, 1.0, size=env.spec.action_dim)
        else:
            action, _ = policy_sample(state.policy, episode_state, state.rng_collect)
        s_next, reward, terminated, truncated = env.step(action)
        state.on_buffer.push(Transition(episode_state, action, reward, s_next, terminated))
        episode_state = None if (terminated or truncated) else s_next

        if step > spec.warmup:
            batch = sample_union(state.off_buffer, state.on_buffer, cfg.batch_size,
                                 state.rng_batch)
            targets = compute_target(batch, state.ensemble, state.policy,
                                     state.coef, cfg, state.rng_perturb)
            critic_step(batch, targets, state, cfg)
            actor_step(batch, state, cfg)
            polyak_update(state.ensemble, cfg.rho)

        if step % spec.eval_every == 0:
            mean_ret, _ = evaluate(state.policy, eval_env, spec.eval_episodes,
                                   seed=seed + step)
            snapshot = replace(state.policy, trunk=state.policy.trunk.copy())
            snapshots.append((step, mean_ret, snapshot))
    return snapshots, state.on_buffer


def _rollout_dataset(env_name: str, policy, size: int, seed: int) -> ReplayBuffer:
    """Stochastic-policy rollouts until `size` transitions are stored."""
    env = make_env(env_name)
    buf = ReplayBuffer(size, env.spec.state_dim, env.spec.action_dim)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD5)))
    s = None
    while buf.size < size:
        if s is None:
            s = env.reset(int(rng.integers(0, 2**31 - 1)))
        if policy is None:
            action = rng.uniform(-1.0, 1.0, size=env.spec.action_dim)
        else:
            action, _ = policy_sample(policy, s, rng)
        s_next, reward, terminated, truncated = env.step(action)
        buf.push(Transition(s, action, reward, s_next, terminated))
        s = None if (terminated or truncated) else s_next
    return buf


def _random_baseline_return(env_name: str, seed: int, episodes: int = 5) -> float:
    env = make_env(env_name)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBA5E)))
    returns = []
    for ep in range(episodes):
        env.reset(seed + ep)
        total, done = 0.0, False
        while not done:
            _, r, terminated, truncated = env.step(
                rng.uniform(-1.0, 1.0, size=env.spec.action_dim))
            total += r
            done = terminated or truncated
        returns.append(total)
    return float(np.mean(returns))


def generate_dataset(env_name: str, tier: str, size: int, seed: int):
    """Build a tiered dataset; returns (buffer, manifest dict)."""
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}; available: {TIERS}")
    if size < 1:
        raise ValueError("size must be >= 1")
    env = make_env(env_name)  # validates the name
    manifest = {"env": env_name, "tier": tier, "seed": seed, "size": size}

    if tier == "random":
        buf = _rollout_dataset(env_name, None, size, seed)
        manifest["generating_return"] = _random_baseline_return(env_name, seed)
        return buf, manifest

    spec = REFERENCE_RUNS[env_name]
    snapshots, run_buffer = _online_reference_run(env_name, seed)
    returns = [ret for _, ret, _ in snapshots]
    best_i = int(np.argmax(returns))
    best_step, best_ret, expert_policy = snapshots[best_i]
    if best_ret < spec.expert_floor:
        raise TierGenerationError(
            f"{env_name}: reference run peaked at return {best_ret:.1f}, below the "
            f"expert threshold {spec.expert_floor:.1f}; increase the reference "
            f"step budget (currently {spec.budget})")

    if tier == "expert":
        buf = _rollout_dataset(env_name, expert_policy, size, seed)
        manifest["generating_return"] = best_ret
        return buf, manifest

    # medium threshold interpolates from the random baseline, which keeps the
    # "one third of expert" idea meaningful for negative returns
    random_ret = _random_baseline_return(env_name, seed)
    threshold = random_ret + (best_ret - random_ret) / 3.0
    medium = next(((step, ret, pol) for step, ret, pol in snapshots if ret >= threshold),
                  None)
    if medium is None:
        raise TierGenerationError(
            f"{env_name}: no checkpoint reached the medium threshold {threshold:.1f}; "
            f"increase the reference step budget (currently {spec.budget})")
    med_step, med_ret, med_policy = medium

    if tier == "medium":
        buf = _rollout_dataset(env_name, med_policy, size, seed)
        manifest["generating_return"] = med_ret
        return buf, manifest

    # medium_replay: most recent `size` transitions of the run up to the
    # medium checkpoint
    transitions = run_buffer.transitions()[:med_step]
    if len(transitions) < size:
        raise TierGenerationError(
            f"{env_name}: medium-replay has only {len(transitions)} transitions "
            f"before the medium checkpoint; request size <= {len(transitions)}")
    buf = ReplayBuffer(size, env.spec.state_dim, env.spec.action_dim)
    for tr in transitions[-size:]:
        buf.push(tr)
    manifest["generating_return"] = med_ret
    return buf, manifest


def write_dataset(buffer: ReplayBuffer, manifest: dict, path) -> None:
    """Dataset file plus a sidecar text manifest at <path>.manifest.txt."""
    save_dataset(buffer, path)
    with open(f"{path}.manifest.txt", "w") as f:
        for key in ("env", "tier", "seed", "size", "generating_return"):
            f.write(f"{key}: {manifest[key]}\n")


def read_manifest(path) -> dict:
    manifest = {}
    with open(f"{path}.manifest.txt") as f:
        for line in f:
            key, _, value = line.partition(":")
            manifest[key.strip()] = value.strip()
    return manifest
