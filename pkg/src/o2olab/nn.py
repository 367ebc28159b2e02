"""Minimal dense networks: forward pass, exact backprop, Adam.

Everything is float64 and seed-deterministic. ``backward`` returns the
gradient of ``sum_batch <output, output_grad>``, i.e. gradients are
accumulated over the batch; callers fold any 1/batch factor into
``output_grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("linear", "tanh")


@dataclass
class DenseNet:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[l]: (layer_sizes[l+1], layer_sizes[l])
    biases: list[np.ndarray]  # biases[l]: (layer_sizes[l+1],)
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate: float) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_weights=[np.zeros_like(w) for w in net.weights],
            v_biases=[np.zeros_like(b) for b in net.biases],
        )


def init_net(
    layer_sizes,
    hidden_activation: str = "relu",
    output_activation: str = "linear",
    seed: int = 0,
) -> DenseNet:
    """Build a net with uniform +-1/sqrt(fan_in) weights and zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")

    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(sizes, weights, biases, hidden_activation, output_activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z  # linear


def _activate_grad(z: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    # h is the already-computed activation of z; reused for tanh.
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _check_input(net: DenseNet, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(
            f"expected input of shape (batch, {net.in_dim}), got {x.shape}"
        )
    return x


def forward(net: DenseNet, inputs: np.ndarray) -> np.ndarray:
    """Apply the network to a (batch, in_dim) matrix."""
    h = _check_input(net, inputs)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        kind = net.output_activation if l == last else net.hidden_activation
        h = _activate(z, kind)
    return h


def _backprop(net: DenseNet, inputs: np.ndarray, output_grad: np.ndarray):
    """Shared backward pass; returns (Gradients, input gradient)."""
    x = _check_input(net, inputs)
    gout = np.asarray(output_grad, dtype=np.float64)
    if gout.shape != (x.shape[0], net.out_dim):
        raise ShapeError(
            f"expected output_grad of shape ({x.shape[0]}, {net.out_dim}), "
            f"got {gout.shape}"
        )

    last = len(net.weights) - 1
    pre = []  # z per layer
    act = [x]  # activations, act[l] feeds layer l
    h = x
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        kind = net.output_activation if l == last else net.hidden_activation
        h = _activate(z, kind)
        pre.append(z)
        act.append(h)

    w_grads: list[np.ndarray | None] = [None] * len(net.weights)
    b_grads: list[np.ndarray | None] = [None] * len(net.biases)
    delta = gout
    for l in range(last, -1, -1):
        kind = net.output_activation if l == last else net.hidden_activation
        delta = delta * _activate_grad(pre[l], act[l + 1], kind)
        w_grads[l] = delta.T @ act[l]
        b_grads[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l]
    return Gradients(w_grads, b_grads), delta


def backward(net: DenseNet, inputs: np.ndarray, output_grad: np.ndarray) -> Gradients:
    """Exact gradient of sum over the batch of <output, output_grad>."""
    grads, _ = _backprop(net, inputs, output_grad)
    return grads


def input_gradient(
    net: DenseNet, inputs: np.ndarray, output_grad: np.ndarray
) -> np.ndarray:
    """Gradient of sum_batch <output, output_grad> w.r.t. the inputs."""
    _, din = _backprop(net, inputs, output_grad)
    return din


def adam_step(net: DenseNet, grads: Gradients, state: AdamState) -> None:
    """Bias-corrected Adam update, in place on net and state."""
    if len(grads.weights) != len(net.weights):
        raise ShapeError("gradient layer count does not match the net")
    for g, w in zip(grads.weights, net.weights):
        if g.shape != w.shape:
            raise ShapeError(f"weight grad shape {g.shape} != {w.shape}")
    for arrs in (grads.weights, grads.biases):
        for g in arrs:
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient entry")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    params = net.weights + net.biases
    gs = grads.weights + grads.biases
    ms = state.m_weights + state.m_biases
    vs = state.v_weights + state.v_biases
    for p, g, m, v in zip(params, gs, ms, vs):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)


def polyak_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, in place."""
    for tw, ow in zip(target.weights, online.weights):
        tw[...] = (1.0 - tau) * tw + tau * ow
    for tb, ob in zip(target.biases, online.biases):
        tb[...] = (1.0 - tau) * tb + tau * ob


def net_to_dict(net: DenseNet) -> dict:
    """Flat JSON-ready form; floats survive a JSON round trip exactly."""
    return {
        "layer_sizes": list(net.layer_sizes),
        "activations": [net.hidden_activation, net.output_activation],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(data: dict) -> DenseNet:
    sizes = tuple(int(s) for s in data["layer_sizes"])
    hidden, output = data["activations"]
    net = DenseNet(
        layer_sizes=sizes,
        weights=[np.asarray(w, dtype=np.float64) for w in data["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
        hidden_activation=hidden,
        output_activation=output,
    )
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        want = (sizes[l + 1], sizes[l])
        if w.shape != want:
            raise ValueError(f"layer {l}: weight shape {w.shape}, expected {want}")
        if b.shape != (sizes[l + 1],):
            raise ValueError(f"layer {l}: bias length {b.shape}, expected {sizes[l+1]}")
    return net


def adam_to_dict(state: AdamState) -> dict:
    return {
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
        "step_count": state.step_count,
        "m_weights": [a.tolist() for a in state.m_weights],
        "m_biases": [a.tolist() for a in state.m_biases],
        "v_weights": [a.tolist() for a in state.v_weights],
        "v_biases": [a.tolist() for a in state.v_biases],
    }


def adam_from_dict(data: dict) -> AdamState:
    return AdamState(
        learning_rate=data["learning_rate"],
        beta1=data["beta1"],
        beta2=data["beta2"],
        epsilon=data["epsilon"],
        step_count=data["step_count"],
        m_weights=[np.asarray(a, dtype=np.float64) for a in data["m_weights"]],
        m_biases=[np.asarray(a, dtype=np.float64) for a in data["m_biases"]],
        v_weights=[np.asarray(a, dtype=np.float64) for a in data["v_weights"]],
        v_biases=[np.asarray(a, dtype=np.float64) for a in data["v_biases"]],
    )
