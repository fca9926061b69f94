"""Minimal deterministic dense-network engine with per-sample MSE losses.

Everything is float64 numpy. Networks are plain dataclass values: a list of
(weights, bias, activation) layers. Gradients are exact reverse-mode
derivatives of the per-sample mean-squared error, so they can be checked
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation z (a = act(z))."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)
    activation: str

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("layer weights must be 2-D and bias 1-D")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[1]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericError("non-finite layer parameters")


@dataclass
class DenseNet:
    layers: list[DenseLayer]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[1] != nxt.weights.shape[0]:
                raise ShapeError(
                    f"layer output size {prev.weights.shape[1]} does not chain "
                    f"into next input size {nxt.weights.shape[0]}"
                )

    @property
    def input_size(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def copy(self) -> "DenseNet":
        return DenseNet(
            [
                DenseLayer(l.weights.copy(), l.bias.copy(), l.activation)
                for l in self.layers
            ],
            seed=self.seed,
        )


def init_network(
    layer_sizes: list[int],
    activations: list[str] | None = None,
    seed: int = 0,
) -> DenseNet:
    """Build a dense net with Xavier-uniform weights and zero biases.

    Weights of each layer are drawn from U(-limit, limit) with
    limit = sqrt(6 / (fan_in + fan_out)). The same seed always yields a
    bit-identical network. Default activations are tanh on hidden layers
    and identity on the output layer.
    """
    if len(layer_sizes) < 2:
        raise ConfigError("need at least an input and an output size")
    if any(int(s) != s or s <= 0 for s in layer_sizes):
        raise ConfigError(f"layer sizes must be positive integers: {layer_sizes}")
    n_links = len(layer_sizes) - 1
    if activations is None:
        activations = ["tanh"] * (n_links - 1) + ["identity"]
    if len(activations) != n_links:
        raise ConfigError(
            f"expected {n_links} activations for {len(layer_sizes)} sizes, "
            f"got {len(activations)}"
        )
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out, act in zip(layer_sizes, layer_sizes[1:], activations):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights = rng.uniform(-limit, limit, size=(n_in, n_out))
        layers.append(DenseLayer(weights, np.zeros(n_out), act))
    return DenseNet(layers, seed=seed)


def _forward_cached(
    net: DenseNet, x: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Forward pass keeping pre-activations and activations for backprop.

    Returns (zs, acts) where acts[0] is the input and acts[-1] the output.
    """
    acts = [x]
    zs = []
    for layer in net.layers:
        z = acts[-1] @ layer.weights + layer.bias
        zs.append(z)
        acts.append(_act(layer.activation, z))
    return zs, acts


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_size:
        raise ShapeError(
            f"input of length {x.shape[0] if x.ndim == 1 else x.shape} "
            f"does not match network input size {net.input_size}"
        )
    return _forward_cached(net, x)[1][-1]


def forward_batch(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (batch, input_size) matrix of inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ShapeError(
            f"batch shape {x.shape} does not match network input size "
            f"{net.input_size}"
        )
    return _forward_cached(net, x)[1][-1]


def mse_per_sample(prediction: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared componentwise differences of two equal-length vectors."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape or prediction.ndim != 1:
        raise ShapeError(
            f"prediction shape {prediction.shape} != target shape {target.shape}"
        )
    if prediction.shape[0] < 1:
        raise ShapeError("vectors must have length >= 1")
    diff = prediction - target
    return float(np.mean(diff * diff))


Gradients = list[tuple[np.ndarray, np.ndarray]]


def _backward_from_cache(
    net: DenseNet,
    zs: list[np.ndarray],
    acts: list[np.ndarray],
    targets: np.ndarray,
) -> Gradients:
    """Backprop of the batch-mean per-sample MSE through cached activations."""
    batch = acts[0].shape[0]
    k = targets.shape[1]
    delta = 2.0 * (acts[-1] - targets) / (k * batch)
    grads: Gradients = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = delta * _act_grad(layer.activation, zs[i], acts[i + 1])
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights.T
    return grads


def backward(net: DenseNet, x: np.ndarray, target: np.ndarray) -> Gradients:
    """Exact gradients of mse_per_sample(forward(net, x), target).

    Returns one (weight_grad, bias_grad) pair per layer.
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_size:
        raise ShapeError(f"input length {x.shape} != network input {net.input_size}")
    if target.ndim != 1 or target.shape[0] != net.output_size:
        raise ShapeError(
            f"target length {target.shape} != network output {net.output_size}"
        )
    return backward_batch(net, x[None, :], target[None, :])


def backward_batch(net: DenseNet, x: np.ndarray, targets: np.ndarray) -> Gradients:
    """Gradients of the mean over the batch of per-sample MSE losses."""
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or targets.ndim != 2 or x.shape[0] != targets.shape[0]:
        raise ShapeError(f"incompatible batch shapes {x.shape} and {targets.shape}")
    if x.shape[1] != net.input_size or targets.shape[1] != net.output_size:
        raise ShapeError(
            f"batch shapes {x.shape}/{targets.shape} do not match network "
            f"{net.input_size}->{net.output_size}"
        )
    zs, acts = _forward_cached(net, x)
    return _backward_from_cache(net, zs, acts, targets)


@dataclass
class OptimizerState:
    """Adaptive-moment (Adam) optimizer state for one network."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")


def init_optimizer(net: DenseNet, learning_rate: float = 1e-3) -> OptimizerState:
    params = net.parameters()
    state = OptimizerState(learning_rate=learning_rate)
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]
    return state


def optimizer_step(net: DenseNet, grads: Gradients, state: OptimizerState) -> None:
    """Apply one Adam update in place and advance the step counter."""
    flat: list[np.ndarray] = []
    for gw, gb in grads:
        flat.append(np.asarray(gw, dtype=np.float64))
        flat.append(np.asarray(gb, dtype=np.float64))
    params = net.parameters()
    if len(flat) != len(params) or any(
        g.shape != p.shape for g, p in zip(flat, params)
    ):
        raise ShapeError("gradient shapes do not mirror network parameters")
    for g in flat:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, flat, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
