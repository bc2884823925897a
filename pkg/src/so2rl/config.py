"""Run configuration: registry of every tunable, config-file parsing,
precedence resolution, and the resolved-config snapshot.

Precedence is built-in defaults < config file < command-line flags. Every run
writes the fully resolved snapshot into its output directory before any
computation, and a rerun from that snapshot reproduces the run byte for byte.
"""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

from .trainer import So2Config

# canonical name -> (type, default). Dotted sections: run.* for orchestration,
# so2.* for the trainer, diag.* for diagnostics.
REGISTRY: dict[str, tuple[type, object]] = {
    "run.env": (str, "point-mass"),
    "run.seed": (int, 0),
    "run.output_dir": (str, ""),
    "run.dataset": (str, ""),
    "run.checkpoint": (str, ""),
    "run.out": (str, ""),
    "run.tier": (str, "random"),
    "run.size": (int, 5000),
    "run.steps": (int, 20000),
    "run.from_scratch": (bool, False),
    "run.episodes": (int, 10),
    "run.compare": (str, ""),
    "run.mode": (str, "current_policy"),
    "run.rollout_checkpoint": (str, ""),
    "run.critic_checkpoint": (str, ""),
    "so2.gamma": (float, 0.99),
    "so2.rho": (float, 0.995),
    "so2.sigma": (float, 0.3),
    "so2.clip": (float, 0.6),
    "so2.n_upc": (int, 10),
    "so2.policy_upc": (int, -1),  # -1: follow n_upc
    "so2.batch_size": (int, 256),
    "so2.n_ensemble": (int, 10),
    "so2.target_mode": (str, "min_ensemble"),
    "so2.entropy_mode": (str, "auto"),
    "so2.beta": (float, 0.2),
    "so2.critic_lr": (float, 3e-4),
    "so2.actor_lr": (float, 3e-4),
    "so2.hidden": (str, "256,256"),
    "so2.online_capacity": (int, 1_000_000),
    "so2.eval_interval": (int, 1000),
    "so2.eval_episodes": (int, 5),
    "so2.total_env_steps": (int, 100_000),
    "diag.n_windows": (int, 10),
    "diag.window_len": (int, 32),
    "diag.q_reduction": (str, "min"),
    "diag.member": (int, 0),
    "diag.oracle_scale": (float, 0.0),  # nonzero: replace the critic with
                                        # scale * true-Q (test double)
}

OUTPUT_ROOT_ENV = "SO2RL_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def registry_check() -> None:
    """Every So2Config tunable must be exposed through the registry."""
    exposed = {key.split(".", 1)[1] for key in REGISTRY if key.startswith("so2.")}
    declared = {f.name for f in dataclasses.fields(So2Config)}
    missing = declared - exposed
    if missing:
        raise ConfigError(f"tunables missing from the config registry: {sorted(missing)}")


def _coerce(key: str, value) -> object:
    typ, _ = REGISTRY[key]
    if typ is bool and isinstance(value, str):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: cannot parse boolean from {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config_file(path) -> dict:
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip()
            if key not in REGISTRY:
                raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
            values[key] = _coerce(key, value.strip())
    return values


def resolve(file_values: dict | None = None, cli_values: dict | None = None) -> dict:
    """Apply precedence and return the full resolved mapping."""
    resolved = {key: default for key, (_, default) in REGISTRY.items()}
    for source in (file_values or {}, cli_values or {}):
        for key, value in source.items():
            if key not in REGISTRY:
                raise ConfigError(f"unknown option {key!r}")
            resolved[key] = _coerce(key, value)
    return resolved


def write_snapshot(resolved: dict, output_dir) -> Path:
    missing = set(REGISTRY) - set(resolved)
    if missing:
        raise ConfigError(f"resolved config is incomplete: {sorted(missing)}")
    path = Path(output_dir) / "resolved_config.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("# so2rl resolved config v1\n")
        for key in sorted(resolved):
            f.write(f"{key} = {resolved[key]}\n")
    return path


def parse_hidden(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"so2.hidden: cannot parse layer sizes from {text!r}") from None


def so2_config(resolved: dict) -> So2Config:
    n_upc = resolved["so2.n_upc"]
    policy_upc = resolved["so2.policy_upc"]
    return So2Config(
        gamma=resolved["so2.gamma"],
        rho=resolved["so2.rho"],
        sigma=resolved["so2.sigma"],
        clip=resolved["so2.clip"],
        n_upc=n_upc,
        policy_upc=n_upc if policy_upc < 0 else policy_upc,
        batch_size=resolved["so2.batch_size"],
        n_ensemble=resolved["so2.n_ensemble"],
        target_mode=resolved["so2.target_mode"],
        entropy_mode=resolved["so2.entropy_mode"],
        beta=resolved["so2.beta"],
        critic_lr=resolved["so2.critic_lr"],
        actor_lr=resolved["so2.actor_lr"],
        hidden=parse_hidden(resolved["so2.hidden"]),
        online_capacity=resolved["so2.online_capacity"],
        eval_interval=resolved["so2.eval_interval"],
        eval_episodes=resolved["so2.eval_episodes"],
        total_env_steps=resolved["so2.total_env_steps"],
    )


def output_dir(resolved: dict) -> Path:
    if resolved["run.output_dir"]:
        return Path(resolved["run.output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / f"{resolved['run.env']}-seed{resolved['run.seed']}"
