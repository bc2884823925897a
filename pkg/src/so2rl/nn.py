"""Minimal dense feed-forward networks with hand-written backprop and Adam.

Everything is float64 numpy. There is no computation graph: the layer
topology is fixed (affine -> activation, repeated), the backward pass is
derived by hand, and a central finite-difference routine serves as the
independent gradient oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ShapeError(ValueError):
    """Raised when an input or gradient does not match the network layout."""


@dataclass
class Mlp:
    """Dense network: a stack of (weight [out, in], bias [out], activation)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for k, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ShapeError(f"layer {k}: unknown activation {act!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: in-dim {w.shape[1]} != layer {k - 1} out-dim "
                    f"{self.weights[k - 1].shape[0]}"
                )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass
class GradientBundle:
    """Parameter gradients shaped like an Mlp, plus the gradient w.r.t. the input."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray


@dataclass
class AdamState:
    """Per-parameter Adam moments mirroring an Mlp's layout."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def mlp_init(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Build an Mlp with uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights and biases."""
    if len(activations) != len(dims) - 1:
        raise ShapeError("need one activation per layer")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return Mlp(weights, biases, list(activations))


def _apply_activation(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(act: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # derivative w.r.t. the pre-activation z (a = activation(z) is already known)
    if act == "relu":
        return (z > 0.0).astype(np.float64)
    if act == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def forward_batch(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass on a [B, input_dim] batch; returns [B, output_dim]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.input_dim:
        raise ShapeError(f"batch shape {x.shape} incompatible with input_dim {mlp.input_dim}")
    h = x
    for k, (w, b, act) in enumerate(zip(mlp.weights, mlp.biases, mlp.activations)):
        h = _apply_activation(act, h @ w.T + b)
    return h


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass on a single [input_dim] vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != mlp.input_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with input_dim {mlp.input_dim}")
    return forward_batch(mlp, x[None, :])[0]


def _forward_cached(mlp: Mlp, x: np.ndarray):
    """Forward pass keeping pre- and post-activations for backprop."""
    pre, post = [], [x]
    h = x
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        z = h @ w.T + b
        h = _apply_activation(act, z)
        pre.append(z)
        post.append(h)
    return pre, post


def backward_batch(mlp: Mlp, x: np.ndarray, upstream: np.ndarray) -> GradientBundle:
    """Gradients of sum_b <upstream_b, output_b> w.r.t. parameters and inputs.

    x: [B, input_dim], upstream: [B, output_dim]. Parameter gradients are
    summed over the batch; input_grad has shape [B, input_dim]. Callers
    wanting a mean-loss gradient scale upstream by 1/B themselves.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], mlp.output_dim):
        raise ShapeError(f"upstream shape {upstream.shape} != ({x.shape[0]}, {mlp.output_dim})")
    pre, post = _forward_cached(mlp, x)
    return backward_from_cache(mlp, pre, post, upstream)


def backward_from_cache(mlp: Mlp, pre: list, post: list,
                        upstream: np.ndarray) -> GradientBundle:
    """backward_batch when the forward activations are already available."""
    n_layers = len(mlp.weights)
    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    delta = upstream
    for k in range(n_layers - 1, -1, -1):
        delta = delta * _activation_grad(mlp.activations[k], pre[k], post[k + 1])
        weight_grads[k] = delta.T @ post[k]
        bias_grads[k] = delta.sum(axis=0)
        delta = delta @ mlp.weights[k]
    return GradientBundle(weight_grads, bias_grads, delta)


def mlp_backward(mlp: Mlp, x: np.ndarray, upstream: np.ndarray) -> GradientBundle:
    """Single-input backward pass; input_grad comes back as a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 1 or upstream.ndim != 1:
        raise ShapeError("mlp_backward expects flat input and upstream vectors")
    g = backward_batch(mlp, x[None, :], upstream[None, :])
    g.input_grad = g.input_grad[0]
    return g


def adam_init(mlp: Mlp, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise ValueError("lr must be positive")
    return AdamState(
        m_w=[np.zeros_like(w) for w in mlp.weights],
        v_w=[np.zeros_like(w) for w in mlp.weights],
        m_b=[np.zeros_like(b) for b in mlp.biases],
        v_b=[np.zeros_like(b) for b in mlp.biases],
        t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(mlp: Mlp, grads: GradientBundle, state: AdamState) -> tuple[Mlp, AdamState]:
    """Standard Adam with bias correction; mutates mlp and state in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for k in range(len(mlp.weights)):
        for param, g, m, v, name in (
            (mlp.weights[k], grads.weight_grads[k], state.m_w[k], state.v_w[k], "weight"),
            (mlp.biases[k], grads.bias_grads[k], state.m_b[k], state.v_b[k], "bias"),
        ):
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient in layer {k} {name}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            param -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return mlp, state


def finite_diff_grad(f, mlp: Mlp, step: float) -> GradientBundle:
    """Central-difference gradient of a scalar function of the parameters.

    Slow (two evaluations of f per parameter); test oracle only.
    """
    if step <= 0:
        raise ValueError("step must be positive")

    def central(arr: np.ndarray) -> np.ndarray:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(mlp)
            flat[i] = orig - step
            lo = f(mlp)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        return g

    weight_grads = [central(w) for w in mlp.weights]
    bias_grads = [central(b) for b in mlp.biases]
    return GradientBundle(weight_grads, bias_grads, np.zeros(mlp.input_dim))
