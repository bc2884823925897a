"""Transition storage, dataset file I/O, and union mini-batch sampling.

The dataset file format is fixed: magic "O2OD", version u32, state_dim u32,
action_dim u32, count u64, then per record state/action/reward/next_state as
little-endian f64 in declaration order and done as one byte. Round trips are
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"O2OD"
VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed, truncated, or dimension-incompatible dataset file."""


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool  # true only at a genuine terminal, never at a time-limit truncation


@dataclass
class Batch:
    """Column-stacked sample of transitions plus offline/online provenance."""

    states: np.ndarray       # [B, S]
    actions: np.ndarray      # [B, A]
    rewards: np.ndarray      # [B]
    next_states: np.ndarray  # [B, S]
    dones: np.ndarray        # [B] float (0.0 / 1.0)
    from_online: np.ndarray  # [B] bool

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def online_fraction(self) -> float:
        return float(self.from_online.mean()) if len(self) else 0.0


class ReplayBuffer:
    """Fixed-capacity ring of transitions with FIFO eviction.

    Columns are preallocated numpy arrays so batch assembly is a fancy-index,
    not a Python loop.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        state = np.asarray(tr.state, dtype=np.float64)
        action = np.asarray(tr.action, dtype=np.float64)
        next_state = np.asarray(tr.next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ValueError(f"state dims must be ({self.state_dim},)")
        if action.shape != (self.action_dim,):
            raise ValueError(f"action dims must be ({self.action_dim},)")
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))
                and np.isfinite(tr.reward) and np.all(np.isfinite(next_state))):
            raise ValueError("transition contains non-finite values")
        if np.any(np.abs(action) > 1.0):
            raise ValueError("action outside [-1, 1]")
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = tr.reward
        self.next_states[i] = next_state
        self.dones[i] = bool(tr.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        idx = self._ordered_indices()
        return [
            Transition(self.states[i].copy(), self.actions[i].copy(),
                       float(self.rewards[i]), self.next_states[i].copy(),
                       bool(self.dones[i]))
            for i in idx
        ]

    def _ordered_indices(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return np.roll(np.arange(self.capacity), -self.cursor)

    def gather(self, idx: np.ndarray, from_online: bool) -> Batch:
        return Batch(
            self.states[idx].copy(), self.actions[idx].copy(),
            self.rewards[idx].copy(), self.next_states[idx].copy(),
            self.dones[idx].astype(np.float64),
            np.full(len(idx), from_online),
        )


def sample_union(off: ReplayBuffer, on: ReplayBuffer, batch_size: int,
                 rng: np.random.Generator) -> Batch:
    """Uniform draws with replacement over the concatenation of both buffers."""
    total = off.size + on.size
    if total < 1:
        raise ValueError("cannot sample: both buffers are empty")
    idx = rng.integers(0, total, size=batch_size)
    is_on = idx >= off.size
    parts = []
    if np.any(~is_on):
        parts.append(off.gather(idx[~is_on], from_online=False))
    if np.any(is_on):
        parts.append(on.gather(idx[is_on] - off.size, from_online=True))
    if not parts:
        empty = np.zeros((0,))
        return Batch(np.zeros((0, off.state_dim)), np.zeros((0, off.action_dim)),
                     empty, np.zeros((0, off.state_dim)), empty.copy(),
                     np.zeros(0, dtype=bool))
    if len(parts) == 1:
        return parts[0]
    a, b = parts
    return Batch(
        np.concatenate([a.states, b.states]),
        np.concatenate([a.actions, b.actions]),
        np.concatenate([a.rewards, b.rewards]),
        np.concatenate([a.next_states, b.next_states]),
        np.concatenate([a.dones, b.dones]),
        np.concatenate([a.from_online, b.from_online]),
    )


def save_dataset(buffer: ReplayBuffer, path) -> None:
    idx = buffer._ordered_indices()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, buffer.state_dim, buffer.action_dim))
        f.write(struct.pack("<Q", buffer.size))
        for i in idx:
            f.write(buffer.states[i].astype("<f8").tobytes())
            f.write(buffer.actions[i].astype("<f8").tobytes())
            f.write(struct.pack("<d", buffer.rewards[i]))
            f.write(buffer.next_states[i].astype("<f8").tobytes())
            f.write(struct.pack("<B", int(buffer.dones[i])))


def load_dataset(path, expect_state_dim: int | None = None,
                 expect_action_dim: int | None = None,
                 capacity: int | None = None) -> ReplayBuffer:
    with open(path, "rb") as f:
        header = f.read(4 + 12 + 8)
        if len(header) < 24 or header[:4] != MAGIC:
            raise DatasetFormatError(f"{path}: not a dataset file (bad magic)")
        version, state_dim, action_dim = struct.unpack("<III", header[4:16])
        (count,) = struct.unpack("<Q", header[16:24])
        if version != VERSION:
            raise DatasetFormatError(f"{path}: unsupported version {version}")
        if expect_state_dim is not None and state_dim != expect_state_dim:
            raise DatasetFormatError(
                f"{path}: state_dim {state_dim} != expected {expect_state_dim}")
        if expect_action_dim is not None and action_dim != expect_action_dim:
            raise DatasetFormatError(
                f"{path}: action_dim {action_dim} != expected {expect_action_dim}")
        record = 8 * (2 * state_dim + action_dim + 1) + 1
        body = f.read()
    if len(body) != count * record:
        raise DatasetFormatError(
            f"{path}: truncated file ({len(body)} bytes, expected {count * record})")
    buf = ReplayBuffer(max(capacity or count, count, 1), state_dim, action_dim)
    off = 0
    for _ in range(count):
        state = np.frombuffer(body, "<f8", state_dim, off); off += 8 * state_dim
        action = np.frombuffer(body, "<f8", action_dim, off); off += 8 * action_dim
        (reward,) = struct.unpack_from("<d", body, off); off += 8
        next_state = np.frombuffer(body, "<f8", state_dim, off); off += 8 * state_dim
        done = body[off] != 0; off += 1
        buf.push(Transition(state.copy(), action.copy(), reward, next_state.copy(), done))
    return buf
