"""Minimal dense ReLU networks with exact backprop, Adam, and JSON checkpoints.

Hidden layers use ReLU, the output layer is linear. Everything is float64:
the same weights feed both pointwise inference and interval propagation, and
the gradient tests compare against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Mlp:
    """Fully connected network: per-layer weight matrices (out x in) and biases."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(n <= 0 for n in self.layer_sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {self.layer_sizes}")
        expected = list(zip(self.layer_sizes[1:], self.layer_sizes[:-1]))
        shapes = [w.shape for w in self.weights]
        if shapes != expected:
            raise ValueError(f"weight shapes {shapes} inconsistent with layer sizes {self.layer_sizes}")
        for b, (out, _) in zip(self.biases, expected):
            if b.shape != (out,):
                raise ValueError(f"bias shape {b.shape} inconsistent with layer of {out} units")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def copy_parameters_from(self, other: "Mlp") -> None:
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob


@dataclass
class Gradients:
    """Parameter gradients shaped exactly like the network's weights/biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    """Adam accumulators mirroring an Mlp's parameter shapes."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, learning_rate: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in net.weights],
            v_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_biases=[np.zeros_like(b) for b in net.biases],
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
        )


def init_random(layer_sizes: list[int], rng_seed: int) -> Mlp:
    """He-initialised network (std sqrt(2/fan_in)), zero biases, deterministic per seed."""
    if len(layer_sizes) < 2 or any(n <= 0 for n in layer_sizes):
        raise ValueError(f"need >= 2 positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_sizes), weights, biases)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    a = np.asarray(x, dtype=float)
    if a.shape != (net.input_dim,):
        raise ValueError(f"input shape {a.shape} != ({net.input_dim},)")
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = w @ a + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a


def forward_batch(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate a (n, input_dim) batch; row i equals forward(net, x[i])."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {a.shape} incompatible with input dim {net.input_dim}")
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared componentwise difference."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def backward(net: Mlp, x: np.ndarray, grad_out: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of (output . grad_out) w.r.t. all parameters.

    ReLU subgradient at 0 is taken as 0.
    """
    g = np.asarray(grad_out, dtype=float)
    if g.shape != (net.output_dim,):
        raise ValueError(f"grad_out shape {g.shape} != ({net.output_dim},)")
    grads = backward_batch(net, np.asarray(x, dtype=float)[None, :], g[None, :])
    return grads


def backward_batch(net: Mlp, x: np.ndarray, grad_out: np.ndarray) -> Gradients:
    """Gradients of sum_i (output_i . grad_out_i) over a batch."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {a.shape} incompatible with input dim {net.input_dim}")
    g = np.asarray(grad_out, dtype=float)
    if g.shape != (a.shape[0], net.output_dim):
        raise ValueError(f"grad_out shape {g.shape} != ({a.shape[0]}, {net.output_dim})")

    last = net.n_layers - 1
    activations = [a]  # post-activation inputs to each layer
    pre = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = activations[-1] @ w.T + b
        pre.append(z)
        activations.append(np.maximum(z, 0.0) if i < last else z)

    d_weights = [np.empty(0)] * net.n_layers
    d_biases = [np.empty(0)] * net.n_layers
    delta = g
    for i in range(last, -1, -1):
        d_weights[i] = delta.T @ activations[i]
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (pre[i - 1] > 0.0)
    return Gradients(d_weights, d_biases)


def interval_width_loss(net: Mlp, lo: np.ndarray, hi: np.ndarray
                        ) -> tuple[float, Gradients]:
    """Mean output-interval width under box propagation, with exact parameter gradients.

    lo/hi are (n, input_dim) batches of box bounds. Propagation mirrors the
    interval transformers (w+ / w- split per affine layer, componentwise ReLU),
    so minimising this loss trains the network to stay tight under set-based
    analysis. Bias terms cancel in the width and get zero gradients.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[1] != net.input_dim:
        raise ValueError(f"bound batch shapes {lo.shape} / {hi.shape} invalid")

    last = net.n_layers - 1
    a_lo, a_hi = [lo], [hi]
    z_lo, z_hi = [], []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        w_pos = np.maximum(w, 0.0)
        w_neg = np.minimum(w, 0.0)
        zl = a_lo[-1] @ w_pos.T + a_hi[-1] @ w_neg.T + b
        zh = a_hi[-1] @ w_pos.T + a_lo[-1] @ w_neg.T + b
        z_lo.append(zl)
        z_hi.append(zh)
        if i < last:
            a_lo.append(np.maximum(zl, 0.0))
            a_hi.append(np.maximum(zh, 0.0))

    n, out_dim = z_lo[-1].shape
    loss = float(np.mean(z_hi[-1] - z_lo[-1]))
    g_lo = np.full((n, out_dim), -1.0 / (n * out_dim))
    g_hi = np.full((n, out_dim), 1.0 / (n * out_dim))

    d_weights = [np.empty(0)] * net.n_layers
    d_biases = [np.empty(0)] * net.n_layers
    for i in range(last, -1, -1):
        w = net.weights[i]
        pos_grad = g_lo.T @ a_lo[i] + g_hi.T @ a_hi[i]
        neg_grad = g_lo.T @ a_hi[i] + g_hi.T @ a_lo[i]
        d_weights[i] = np.where(w > 0.0, pos_grad, neg_grad)
        d_biases[i] = (g_lo + g_hi).sum(axis=0)
        if i > 0:
            w_pos = np.maximum(w, 0.0)
            w_neg = np.minimum(w, 0.0)
            prev_g_lo = g_lo @ w_pos + g_hi @ w_neg
            prev_g_hi = g_hi @ w_pos + g_lo @ w_neg
            g_lo = prev_g_lo * (z_lo[i - 1] > 0.0)
            g_hi = prev_g_hi * (z_hi[i - 1] > 0.0)
    return loss, Gradients(d_weights, d_biases)


def accumulate(base: Gradients, extra: Gradients, scale: float = 1.0) -> Gradients:
    """base + scale * extra, in place on base."""
    for acc, g in zip(base.weights, extra.weights):
        acc += scale * g
    for acc, g in zip(base.biases, extra.biases):
        acc += scale * g
    return base


def adam_step(net: Mlp, state: AdamState, grads: Gradients) -> tuple[Mlp, AdamState]:
    """One Adam update with bias correction, in place. Rejects non-finite gradients."""
    for arr in (*grads.weights, *grads.biases):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    params = (net.weights, net.biases)
    moments = ((state.m_weights, state.v_weights), (state.m_biases, state.v_biases))
    grad_lists = (grads.weights, grads.biases)
    for plist, (mlist, vlist), glist in zip(params, moments, grad_lists):
        for p, m, v, g in zip(plist, mlist, vlist, glist):
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return net, state


def to_checkpoint_dict(net: Mlp) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_checkpoint_dict(doc: dict) -> Mlp:
    return Mlp(
        [int(n) for n in doc["layer_sizes"]],
        [np.asarray(w, dtype=float) for w in doc["weights"]],
        [np.asarray(b, dtype=float) for b in doc["biases"]],
    )


def save_checkpoint(net: Mlp, path: str | Path) -> None:
    """Write the JSON checkpoint; float formatting round-trips bit-exactly."""
    Path(path).write_text(json.dumps(to_checkpoint_dict(net)))


def load_checkpoint(path: str | Path) -> Mlp:
    return from_checkpoint_dict(json.loads(Path(path).read_text()))
