"""Binary checkpoint container for the full training state.

Layout (all little-endian):
  magic "O2OC", version u32
  fingerprint: u32 length + utf-8 bytes (hash of the shape-determining config)
  actor Mlp, actor AdamState
  n_members u32, then per member: online Mlp, target Mlp, critic AdamState
  entropy coefficient block

An Mlp is written as n_layers u32, then per layer out u32, in u32,
activation u8 (0=relu, 1=tanh, 2=identity), weights f64 row-major, biases
f64. Adam moments mirror the Mlp arrays, followed by t u64 and lr/beta1/
beta2/eps f64.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .actor_critic import EntropyCoefficient, QEnsemble, SquashedGaussianPolicy
from .nn import AdamState, Mlp

MAGIC = b"O2OC"
VERSION = 1
_ACT_CODE = {"relu": 0, "tanh": 1, "identity": 2}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


class CheckpointError(ValueError):
    """Malformed checkpoint or config fingerprint mismatch."""


def config_fingerprint(fields: dict) -> str:
    """Hash of the shape-determining configuration, stable across runs."""
    text = "\n".join(f"{k}={fields[k]}" for k in sorted(fields))
    return hashlib.sha256(text.encode()).hexdigest()


def _write_array(f, arr: np.ndarray) -> None:
    f.write(arr.astype("<f8").tobytes())


def _read_array(f, shape) -> np.ndarray:
    n = int(np.prod(shape))
    data = f.read(8 * n)
    if len(data) != 8 * n:
        raise CheckpointError("truncated checkpoint (array body)")
    return np.frombuffer(data, "<f8").reshape(shape).copy()


def _write_mlp(f, mlp: Mlp) -> None:
    f.write(struct.pack("<I", len(mlp.weights)))
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        f.write(struct.pack("<IIB", w.shape[0], w.shape[1], _ACT_CODE[act]))
        _write_array(f, w)
        _write_array(f, b)


def _read_mlp(f) -> Mlp:
    (n_layers,) = struct.unpack("<I", f.read(4))
    weights, biases, acts = [], [], []
    for _ in range(n_layers):
        out, inp, code = struct.unpack("<IIB", f.read(9))
        weights.append(_read_array(f, (out, inp)))
        biases.append(_read_array(f, (out,)))
        acts.append(_ACT_NAME[code])
    return Mlp(weights, biases, acts)


def _write_adam(f, state: AdamState) -> None:
    for group in (state.m_w, state.v_w, state.m_b, state.v_b):
        for arr in group:
            _write_array(f, arr)
    f.write(struct.pack("<Qdddd", state.t, state.lr, state.beta1, state.beta2,
                        state.eps))


def _read_adam(f, mlp: Mlp) -> AdamState:
    def like(template):
        return [_read_array(f, arr.shape) for arr in template]

    m_w, v_w = like(mlp.weights), like(mlp.weights)
    m_b, v_b = like(mlp.biases), like(mlp.biases)
    t, lr, b1, b2, eps = struct.unpack("<Qdddd", f.read(8 + 32))
    return AdamState(m_w, v_w, m_b, v_b, t=t, lr=lr, beta1=b1, beta2=b2, eps=eps)


def save_checkpoint(path, policy: SquashedGaussianPolicy, ensemble: QEnsemble,
                    coef: EntropyCoefficient, actor_opt: AdamState,
                    critic_opts: list[AdamState], fingerprint: str) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        fp = fingerprint.encode()
        f.write(struct.pack("<I", len(fp)))
        f.write(fp)
        f.write(struct.pack("<I", policy.action_dim))
        f.write(struct.pack("<dd", policy.log_std_min, policy.log_std_max))
        _write_mlp(f, policy.trunk)
        _write_adam(f, actor_opt)
        f.write(struct.pack("<I", ensemble.n_members))
        for online, target, opt in zip(ensemble.online, ensemble.target, critic_opts):
            _write_mlp(f, online)
            _write_mlp(f, target)
            _write_adam(f, opt)
        mode_fixed = 1 if coef.mode == "fixed" else 0
        f.write(struct.pack("<Bddd", mode_fixed, coef.log_beta,
                            coef.target_entropy, coef.lr))
        f.write(struct.pack("<ddQ", coef.adam_m, coef.adam_v, coef.adam_t))


def load_checkpoint(path, expect_fingerprint: str | None = None):
    """Returns (policy, ensemble, coef, actor_opt, critic_opts, fingerprint)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (fp_len,) = struct.unpack("<I", f.read(4))
        fingerprint = f.read(fp_len).decode()
        if expect_fingerprint is not None and fingerprint != expect_fingerprint:
            raise CheckpointError(
                f"{path}: config fingerprint mismatch (checkpoint {fingerprint[:12]}..., "
                f"current config {expect_fingerprint[:12]}...)")
        (action_dim,) = struct.unpack("<I", f.read(4))
        log_std_min, log_std_max = struct.unpack("<dd", f.read(16))
        trunk = _read_mlp(f)
        policy = SquashedGaussianPolicy(trunk, action_dim, log_std_min, log_std_max)
        actor_opt = _read_adam(f, trunk)
        (n_members,) = struct.unpack("<I", f.read(4))
        online, target, critic_opts = [], [], []
        for _ in range(n_members):
            member = _read_mlp(f)
            online.append(member)
            target.append(_read_mlp(f))
            critic_opts.append(_read_adam(f, member))
        ensemble = QEnsemble(online, target)
        mode_fixed, log_beta, target_entropy, lr = struct.unpack("<Bddd", f.read(25))
        adam_m, adam_v, adam_t = struct.unpack("<ddQ", f.read(24))
        coef = EntropyCoefficient(
            mode="fixed" if mode_fixed else "auto",
            log_beta=log_beta, target_entropy=target_entropy, lr=lr,
            adam_m=adam_m, adam_v=adam_v, adam_t=adam_t,
        )
    return policy, ensemble, coef, actor_opt, critic_opts, fingerprint
