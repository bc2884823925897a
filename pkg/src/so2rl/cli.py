"""Command-line entry point: gen-data, pretrain, finetune, evaluate, diagnose.

Exit code 0 on success; on failure a single machine-readable line
"<category>: <message>" goes to stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from .datasets import TierGenerationError, generate_dataset, write_dataset
from .diagnostics import (
    WindowSpec,
    ensemble_q_fn,
    read_report,
    windowed_kendall,
    write_report,
)
from .envs import make_env
from .replay import DatasetFormatError, load_dataset
from .trainer import evaluate, finetune_epoch, init_train_state, pretrain

METRICS_HEADER = (
    "# so2rl metrics csv v1\n"
    "env_step,grad_step,critic_loss,actor_objective,beta,"
    "eval_return_mean,eval_return_std,online_fraction_in_batch\n"
)


class CliError(RuntimeError):
    def __init__(self, category: str, message: str, code: int = 1):
        super().__init__(message)
        self.category = category
        self.code = code


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.17g}"


def _fingerprint(resolved: dict, env) -> str:
    return ckpt.config_fingerprint({
        "env": resolved["run.env"],
        "state_dim": env.spec.state_dim,
        "action_dim": env.spec.action_dim,
        "hidden": resolved["so2.hidden"],
        "n_ensemble": resolved["so2.n_ensemble"],
        "entropy_mode": resolved["so2.entropy_mode"],
    })


def _load_offline(resolved: dict, env, required: bool):
    path = resolved["run.dataset"]
    if not path:
        if required:
            raise CliError("usage", "a dataset path is required (run.dataset)")
        return None
    if not Path(path).exists():
        raise CliError("io", f"dataset file not found: {path}")
    try:
        return load_dataset(path, env.spec.state_dim, env.spec.action_dim)
    except DatasetFormatError as exc:
        raise CliError("format", str(exc)) from exc


def _save_state(path, state, fingerprint: str) -> None:
    ckpt.save_checkpoint(path, state.policy, state.ensemble, state.coef,
                         state.actor_opt, state.critic_opts, fingerprint)


def _load_policy_only(path):
    if not Path(path).exists():
        raise CliError("io", f"checkpoint not found: {path}")
    try:
        return ckpt.load_checkpoint(path)
    except ckpt.CheckpointError as exc:
        raise CliError("format", str(exc)) from exc


def cmd_gen_data(resolved: dict, out_dir: Path) -> None:
    out = resolved["run.out"] or str(out_dir / "dataset.bin")
    try:
        buf, manifest = generate_dataset(resolved["run.env"], resolved["run.tier"],
                                         resolved["run.size"], resolved["run.seed"])
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc
    except TierGenerationError as exc:
        raise CliError("generation", str(exc)) from exc
    write_dataset(buf, manifest, out)
    print(f"wrote {buf.size} transitions to {out}")


def cmd_pretrain(resolved: dict, out_dir: Path) -> None:
    env = make_env(resolved["run.env"])
    eval_env = make_env(resolved["run.env"])
    cfg = cfgmod.so2_config(resolved)
    seed = resolved["run.seed"]
    steps = resolved["run.steps"]
    dataset = _load_offline(resolved, env, required=steps > 0)
    rows = []
    if steps == 0:
        state = init_train_state(env, cfg, seed, off_buffer=dataset)
    else:
        # evaluate at eval_interval boundaries by pretraining in chunks
        state = None
        done = 0
        while done < steps:
            chunk = min(cfg.eval_interval, steps - done)
            if state is None:
                state = pretrain(dataset, chunk, env, cfg, seed)
            else:
                _continue_pretrain(state, chunk, env, cfg)
            done += chunk
            mean, std = evaluate(state.policy, eval_env, cfg.eval_episodes, seed)
            rows.append((0, state.grad_steps, float("nan"), float("nan"),
                         state.coef.beta, mean, std, 0.0))
    fingerprint = _fingerprint(resolved, env)
    _save_state(out_dir / "checkpoint.bin", state, fingerprint)
    _write_metrics(out_dir / "metrics.csv", rows)
    if rows:
        print(f"pretrain done: eval return {rows[-1][5]:.2f}")
    else:
        print("pretrain done: 0 steps, initialized checkpoint written")


def _continue_pretrain(state, steps: int, env, cfg) -> None:
    from dataclasses import replace

    from .replay import sample_union
    from .trainer import actor_step, compute_target, critic_step, polyak_update

    pre_cfg = replace(cfg, sigma=0.0, target_mode="min_ensemble")
    for _ in range(steps):
        batch = sample_union(state.off_buffer, state.on_buffer, cfg.batch_size,
                             state.rng_batch)
        targets = compute_target(batch, state.ensemble, state.policy, state.coef,
                                 pre_cfg, state.rng_perturb)
        critic_step(batch, targets, state, pre_cfg)
        actor_step(batch, state, pre_cfg)
        polyak_update(state.ensemble, cfg.rho)
        state.grad_steps += 1


def cmd_finetune(resolved: dict, out_dir: Path) -> None:
    env = make_env(resolved["run.env"])
    eval_env = make_env(resolved["run.env"])
    cfg = cfgmod.so2_config(resolved)
    seed = resolved["run.seed"]
    fingerprint = _fingerprint(resolved, env)
    dataset = _load_offline(resolved, env, required=False)
    state = init_train_state(env, cfg, seed, off_buffer=dataset)
    if resolved["run.from_scratch"]:
        if resolved["run.checkpoint"]:
            raise CliError("usage", "run.checkpoint and run.from_scratch are exclusive")
    else:
        if not resolved["run.checkpoint"]:
            raise CliError("usage", "finetune needs run.checkpoint or run.from_scratch")
        loaded = _load_policy_only(resolved["run.checkpoint"])
        policy, ensemble, coef, actor_opt, critic_opts, fp = loaded
        if fp != fingerprint:
            raise CliError("mismatch",
                           f"checkpoint fingerprint {fp[:12]}... does not match the "
                           f"resolved config ({fingerprint[:12]}...)")
        state.policy, state.ensemble, state.coef = policy, ensemble, coef
        state.actor_opt, state.critic_opts = actor_opt, critic_opts
        # the resolved config governs learning rates from here on; the
        # checkpointed optimizers only contribute their moment estimates
        state.actor_opt.lr = cfg.actor_lr
        for opt in state.critic_opts:
            opt.lr = cfg.critic_lr
        state.coef.lr = cfg.actor_lr
    rows = []
    online_fracs = []
    for _ in range(cfg.total_env_steps):
        metrics = finetune_epoch(state, env, cfg)
        online_fracs.append(metrics["on_size"] / max(metrics["on_size"] + metrics["off_size"], 1))
        if state.env_steps % cfg.eval_interval == 0:
            mean, std = evaluate(state.policy, eval_env, cfg.eval_episodes, seed)
            rows.append((metrics["env_step"], metrics["grad_step"],
                         metrics["critic_loss"], metrics["actor_objective"],
                         metrics["beta"], mean, std, float(np.mean(online_fracs))))
            online_fracs = []
    _save_state(out_dir / "checkpoint.bin", state, fingerprint)
    _write_metrics(out_dir / "metrics.csv", rows)
    if rows:
        print(f"finetune done: eval return {rows[-1][5]:.2f}")


def cmd_evaluate(resolved: dict, out_dir: Path) -> None:
    env = make_env(resolved["run.env"])
    if not resolved["run.checkpoint"]:
        raise CliError("usage", "evaluate needs run.checkpoint")
    policy, *_ = _load_policy_only(resolved["run.checkpoint"])
    mean, std = evaluate(policy, env, resolved["run.episodes"], resolved["run.seed"])
    _write_metrics(out_dir / "metrics.csv",
                   [(0, 0, float("nan"), float("nan"), float("nan"), mean, std, 0.0)])
    print(f"eval return mean {mean:.17g} std {std:.17g} "
          f"over {resolved['run.episodes']} episodes")


def cmd_diagnose(resolved: dict, out_dir: Path) -> None:
    env = make_env(resolved["run.env"])
    gamma = resolved["so2.gamma"]
    spec = WindowSpec(resolved["diag.n_windows"], resolved["diag.window_len"])
    mode = resolved["run.mode"]
    if mode not in ("current_policy", "fixed_policy"):
        raise CliError("usage", f"run.mode must be current_policy or fixed_policy, got {mode!r}")

    if mode == "fixed_policy":
        roll_path = resolved["run.rollout_checkpoint"]
        critic_path = resolved["run.critic_checkpoint"]
        if not roll_path or not critic_path:
            raise CliError("usage",
                           "fixed_policy mode needs run.rollout_checkpoint and "
                           "run.critic_checkpoint")
        rollout_policy, *_ = _load_policy_only(roll_path)
        _, ensemble, *_ = _load_policy_only(critic_path)
    else:
        if not resolved["run.checkpoint"]:
            raise CliError("usage", "diagnose needs run.checkpoint")
        rollout_policy, ensemble, *_ = _load_policy_only(resolved["run.checkpoint"])

    oracle_scale = resolved["diag.oracle_scale"]
    q_fn = None if oracle_scale else ensemble_q_fn(
        ensemble, resolved["diag.q_reduction"], resolved["diag.member"])
    try:
        report = windowed_kendall(
            rollout_policy, q_fn, env, gamma, spec,
            episodes=resolved["run.episodes"], seed=resolved["run.seed"],
            oracle_scale=oracle_scale or 1.0,
            metadata={"env": resolved["run.env"], "mode": mode,
                      "q_reduction": resolved["diag.q_reduction"]},
        )
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc
    report_path = out_dir / "quality_report.txt"
    write_report(report, report_path)
    print(f"kendall K = {report.kendall:.6f} ({len(report.window_taus)} windows)")

    if resolved["run.compare"]:
        baseline = read_report(resolved["run.compare"])
        if baseline.metadata.get("env") != resolved["run.env"]:
            raise CliError("mismatch",
                           f"baseline report env {baseline.metadata.get('env')!r} "
                           f"!= {resolved['run.env']!r}")
        diff_mean = (float(np.nanmean(report.normalized_diffs))
                     - float(np.nanmean(baseline.normalized_diffs)))
        diff_k = report.kendall - baseline.kendall
        with open(out_dir / "comparison.txt", "w") as f:
            f.write("# so2rl report comparison v1\n")
            f.write(f"normalized_diff_minus_baseline: {diff_mean:.17g}\n")
            f.write(f"kendall_minus_baseline: {diff_k:.17g}\n")
        print(f"vs baseline: normalized diff {diff_mean:+.6f}, K {diff_k:+.6f}")


def _write_metrics(path, rows) -> None:
    with open(path, "w") as f:
        f.write(METRICS_HEADER)
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


# CLI flag -> registry key. Flags shared across subcommands.
_FLAGS = {
    "--env": "run.env", "--seed": "run.seed", "--output-dir": "run.output_dir",
    "--dataset": "run.dataset", "--checkpoint": "run.checkpoint",
    "--out": "run.out", "--tier": "run.tier", "--size": "run.size",
    "--steps": "run.steps", "--episodes": "run.episodes",
    "--compare": "run.compare", "--mode": "run.mode",
    "--rollout-checkpoint": "run.rollout_checkpoint",
    "--critic-checkpoint": "run.critic_checkpoint",
    "--gamma": "so2.gamma", "--rho": "so2.rho", "--sigma": "so2.sigma",
    "--clip": "so2.clip", "--nupc": "so2.n_upc", "--policy-upc": "so2.policy_upc",
    "--batch-size": "so2.batch_size", "--ensemble": "so2.n_ensemble",
    "--target-mode": "so2.target_mode", "--entropy-mode": "so2.entropy_mode",
    "--beta": "so2.beta", "--critic-lr": "so2.critic_lr",
    "--actor-lr": "so2.actor_lr", "--hidden": "so2.hidden",
    "--online-capacity": "so2.online_capacity",
    "--eval-interval": "so2.eval_interval", "--eval-episodes": "so2.eval_episodes",
    "--total-steps": "so2.total_env_steps",
    "--windows": "diag.n_windows", "--window-len": "diag.window_len",
    "--q-reduction": "diag.q_reduction", "--member": "diag.member",
    "--oracle-scale": "diag.oracle_scale",
}

COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="so2rl")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--from-scratch", action="store_true", default=None,
                       help="finetune without a pretrained checkpoint")
        for flag, key in _FLAGS.items():
            typ, _ = cfgmod.REGISTRY[key]
            hidden_flag = key == "diag.oracle_scale"
            p.add_argument(flag, dest=key, type=typ, default=None,
                           help=argparse.SUPPRESS if hidden_flag else f"({key})")
    return parser


def main(argv=None) -> int:
    try:
        cfgmod.registry_check()
        args = build_parser().parse_args(argv)
        cli_values = {key: value for key, value in vars(args).items()
                      if key in cfgmod.REGISTRY and value is not None}
        if args.from_scratch is not None:
            cli_values["run.from_scratch"] = True
        file_values = cfgmod.parse_config_file(args.config) if args.config else None
        resolved = cfgmod.resolve(file_values, cli_values)
        out_dir = cfgmod.output_dir(resolved)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfgmod.write_snapshot(resolved, out_dir)
        COMMANDS[args.command](resolved, out_dir)
        return 0
    except CliError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return exc.code
    except cfgmod.ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"internal: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
