"""Q-value quality diagnostics: Monte-Carlo true Q, normalized difference,
and the windowed Kendall rank-correlation metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actor_critic import QEnsemble, policy_sample, q_values


class DegenerateRankingError(ValueError):
    """Kendall's tau is undefined when one input is constant."""


@dataclass
class RolloutTrace:
    states: np.ndarray    # [T, S]
    actions: np.ndarray   # [T, A]
    rewards: np.ndarray   # [T]
    truncated: bool       # ended by time limit rather than a genuine terminal
    gamma: float

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class WindowSpec:
    n_windows: int = 10       # M
    window_len: int = 32      # W, consecutive (s, a) pairs per window

    def __post_init__(self):
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")

    def starts(self, episode_len: int) -> list[int]:
        """Evenly spaced window start indices; errors if the episode is short."""
        if episode_len < self.window_len:
            raise ValueError(
                f"episode of length {episode_len} cannot fit a window of "
                f"{self.window_len}; need length >= {self.window_len}")
        last = episode_len - self.window_len
        if self.n_windows == 1:
            return [0]
        return sorted({round(i * last / (self.n_windows - 1))
                       for i in range(self.n_windows)})


@dataclass
class QualityReport:
    q_estimated: np.ndarray       # per pair
    q_true: np.ndarray            # per pair
    normalized_diffs: np.ndarray  # per pair, nan where undefined
    n_excluded: int               # pairs with |q_true| too small for the ratio
    window_taus: list[float]      # K_i
    kendall: float                # K = mean of K_i
    tail_biased: bool             # some true-Q values carry a truncation tail
    metadata: dict = field(default_factory=dict)


def true_q(trace: RolloutTrace, t: int, gamma: float) -> float:
    """Discounted return from step t to the end of the trace."""
    if not 0 <= t < len(trace):
        raise IndexError(f"index {t} out of range for trace of length {len(trace)}")
    discounts = gamma ** np.arange(len(trace) - t)
    return float(discounts @ trace.rewards[t:])


def true_q_all(trace: RolloutTrace, gamma: float) -> np.ndarray:
    """Discounted return at every step, by backward recursion."""
    g = np.zeros(len(trace))
    acc = 0.0
    for t in range(len(trace) - 1, -1, -1):
        acc = trace.rewards[t] + gamma * acc
        g[t] = acc
    return g


def tail_bias_flag(trace: RolloutTrace, t: int, gamma: float,
                   threshold: float = 1e-3) -> bool:
    """True when a truncated episode leaves a non-negligible discounted tail."""
    return trace.truncated and gamma ** (len(trace) - t) > threshold


def normalized_difference(q_est: float, q_true: float) -> float:
    """(estimated - true) / true; positive means overestimation."""
    if abs(q_true) <= 1e-8:
        return float("nan")
    return (q_est - q_true) / q_true


def kendall_tau(x: np.ndarray, y: np.ndarray) -> float:
    """Kendall's tau-b via vectorized pair sign counting.

    Reduces to tau-a = (C - D) / (n(n-1)/2) on tie-free inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 2 or len(y) != n:
        raise ValueError("kendall_tau needs two equal-length vectors, n >= 2")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateRankingError("kendall_tau undefined for a constant input")
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    sx, sy = sx[iu], sy[iu]
    prod = sx * sy
    concordant = int(np.sum(prod > 0))
    discordant = int(np.sum(prod < 0))
    ties_x_only = int(np.sum((sx == 0) & (sy != 0)))
    ties_y_only = int(np.sum((sy == 0) & (sx != 0)))
    denom = np.sqrt(
        float(concordant + discordant + ties_x_only)
        * float(concordant + discordant + ties_y_only))
    return (concordant - discordant) / denom


def rollout_trace(policy, env, gamma: float, rng: np.random.Generator) -> RolloutTrace:
    """One stochastic episode recorded as (state, action, reward) triples."""
    states, actions, rewards = [], [], []
    s = env.reset(int(rng.integers(0, 2**31 - 1)))
    while True:
        a, _ = policy_sample(policy, s, rng)
        s_next, r, terminated, truncated = env.step(a)
        states.append(s)
        actions.append(a)
        rewards.append(r)
        s = s_next
        if terminated or truncated:
            return RolloutTrace(np.array(states), np.array(actions),
                                np.array(rewards), truncated=truncated, gamma=gamma)


def ensemble_q_fn(ensemble: QEnsemble, reduction: str = "min", member: int = 0):
    """Estimated-Q callable over (states [T,S], actions [T,A]) -> [T]."""
    def q_fn(states, actions):
        qs = q_values(ensemble, "online", states, actions)
        if reduction == "min":
            return qs.min(axis=1)
        if reduction == "mean":
            return qs.mean(axis=1)
        if reduction == "member":
            return qs[:, member]
        raise ValueError(f"unknown reduction {reduction!r}")
    return q_fn


def windowed_kendall(rollout_policy, q_fn, env, gamma: float, spec: WindowSpec,
                     episodes: int, seed: int, oracle_scale: float = 1.0,
                     metadata: dict | None = None) -> QualityReport:
    """The sliding-window rank-quality procedure.

    Rolls out `episodes` stochastic episodes with rollout_policy, forms
    evenly spaced windows of consecutive (s, a) pairs per episode, scores each
    pair with q_fn (estimated) and the discounted remaining return (true),
    computes Kendall's tau per window, and averages all window coefficients
    into the final metric. The fixed-policy variant is obtained by passing a
    frozen rollout_policy alongside a q_fn built from a later checkpoint.

    q_fn=None injects the oracle critic test double: estimated Q becomes
    oracle_scale times the true discounted return.
    """
    rng = np.random.default_rng(seed)
    all_est, all_true, taus = [], [], []
    tail_biased = False
    for _ in range(episodes):
        trace = rollout_trace(rollout_policy, env, gamma, rng)
        q_true_ep = true_q_all(trace, gamma)
        if q_fn is None:
            q_est_ep = oracle_scale * q_true_ep
        else:
            q_est_ep = np.asarray(q_fn(trace.states, trace.actions), dtype=np.float64)
        tail_biased |= tail_bias_flag(trace, len(trace) - 1, gamma)
        for start in spec.starts(len(trace)):
            window = slice(start, start + spec.window_len)
            taus.append(kendall_tau(q_est_ep[window], q_true_ep[window]))
            all_est.append(q_est_ep[window])
            all_true.append(q_true_ep[window])
    q_est = np.concatenate(all_est)
    q_true_vals = np.concatenate(all_true)
    diffs = np.array([normalized_difference(e, t) for e, t in zip(q_est, q_true_vals)])
    return QualityReport(
        q_estimated=q_est,
        q_true=q_true_vals,
        normalized_diffs=diffs,
        n_excluded=int(np.sum(np.isnan(diffs))),
        window_taus=[float(t) for t in taus],
        kendall=float(np.mean(taus)),
        tail_biased=tail_biased,
        metadata=dict(metadata or {}, gamma=gamma, episodes=episodes,
                      n_windows=spec.n_windows, window_len=spec.window_len,
                      seed=seed),
    )


def write_report(report: QualityReport, path) -> None:
    """Key-value header, per-window table, per-pair table."""
    with open(path, "w") as f:
        f.write("# so2rl quality report v1\n")
        for key in sorted(report.metadata):
            f.write(f"{key}: {report.metadata[key]}\n")
        f.write(f"kendall: {report.kendall:.17g}\n")
        f.write(f"n_excluded: {report.n_excluded}\n")
        f.write(f"tail_biased: {report.tail_biased}\n")
        f.write("\n[windows]\nwindow\ttau\n")
        for i, tau in enumerate(report.window_taus):
            f.write(f"{i}\t{tau:.17g}\n")
        f.write("\n[pairs]\npair\tq_estimated\tq_true\tnormalized_diff\n")
        for i, (e, t, d) in enumerate(zip(report.q_estimated, report.q_true,
                                          report.normalized_diffs)):
            f.write(f"{i}\t{e:.17g}\t{t:.17g}\t{d:.17g}\n")


def read_report(path) -> QualityReport:
    header, windows, pairs = {}, [], []
    section = "header"
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[windows]":
                section = "windows"
                continue
            if line == "[pairs]":
                section = "pairs"
                continue
            if section == "header":
                key, _, value = line.partition(":")
                header[key.strip()] = value.strip()
            elif section == "windows" and not line.startswith("window"):
                windows.append(float(line.split("\t")[1]))
            elif section == "pairs" and not line.startswith("pair"):
                pairs.append([float(v) for v in line.split("\t")[1:]])
    arr = np.array(pairs) if pairs else np.zeros((0, 3))
    metadata = {k: v for k, v in header.items()
                if k not in ("kendall", "n_excluded", "tail_biased")}
    return QualityReport(
        q_estimated=arr[:, 0], q_true=arr[:, 1], normalized_diffs=arr[:, 2],
        n_excluded=int(header["n_excluded"]),
        window_taus=windows,
        kendall=float(header["kendall"]),
        tail_biased=header["tail_biased"] == "True",
        metadata=metadata,
    )
