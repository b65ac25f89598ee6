"""Minimal dense-network engine: forward, backprop, Adam, binary cross-entropy.

Everything in this package that learns (generator, discriminator, classifier,
autoencoder, behavioral models) is a plain fully-connected network built from
``LayerSpec`` entries. Parameters live in numpy arrays; there is no hidden
state, so networks are cheap to copy and safe to share once training is done.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, TrainingError

CHECKPOINT_FORMAT_VERSION = 1

# Clamp applied to probabilities before logs so BCE stays finite.
PROB_EPS = 1e-7

ACTIVATIONS = ("none", "relu", "leaky_relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: output = activation(x @ W + b)."""

    input_dim: int
    output_dim: int
    activation: str = "none"
    slope: float = 0.2  # leaky_relu only

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise DimensionError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not (0.0 < self.slope < 1.0):
            raise DimensionError(f"leaky_relu slope must be in (0,1), got {self.slope}")


@dataclass
class DenseNetwork:
    """Stack of dense layers with per-layer weights (in, out) and biases (out,)."""

    specs: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            specs=list(self.specs),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def _check_chain(specs: list[LayerSpec]):
    if not specs:
        raise DimensionError("network needs at least one layer")
    for a, b in zip(specs, specs[1:]):
        if a.output_dim != b.input_dim:
            raise DimensionError(
                f"layer dims do not chain: {a.output_dim} -> {b.input_dim}"
            )


def init_network(specs: list[LayerSpec], seed_or_rng) -> DenseNetwork:
    """Build a network with glorot-style uniform init, +-sqrt(6/(fan_in+fan_out))."""
    _check_chain(specs)
    rng = np.random.default_rng(seed_or_rng) if not isinstance(seed_or_rng, np.random.Generator) else seed_or_rng
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return DenseNetwork(specs=list(specs), weights=weights, biases=biases)


def _apply_activation(z: np.ndarray, spec: LayerSpec) -> np.ndarray:
    if spec.activation == "none":
        return z
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    if spec.activation == "leaky_relu":
        return np.where(z > 0.0, z, spec.slope * z)
    # sigmoid, numerically stable in both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activation_deriv(a: np.ndarray, spec: LayerSpec) -> np.ndarray:
    """Derivative of the activation written in terms of its own output."""
    if spec.activation == "none":
        return np.ones_like(a)
    if spec.activation == "relu":
        return (a > 0.0).astype(a.dtype)
    if spec.activation == "leaky_relu":
        return np.where(a > 0.0, 1.0, spec.slope)
    return a * (1.0 - a)


def forward(net: DenseNetwork, batch: np.ndarray) -> list[np.ndarray]:
    """Run a batch through the network, returning [input, layer1, ..., output].

    The returned list feeds straight into :func:`backward`.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2:
        raise DimensionError(f"batch must be 2-D, got shape {batch.shape}")
    if batch.shape[1] != net.input_dim:
        raise DimensionError(
            f"batch has {batch.shape[1]} columns, network expects {net.input_dim}"
        )
    if not np.isfinite(batch).all():
        raise DimensionError("batch contains non-finite values")
    activations = [batch]
    a = batch
    for spec, w, b in zip(net.specs, net.weights, net.biases):
        a = _apply_activation(a @ w + b, spec)
        activations.append(a)
    return activations


def backward(
    net: DenseNetwork, activations: list[np.ndarray], out_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``out_grad`` (dLoss/dOutput) through the network.

    Returns (param_grads, input_grad) where param_grads matches
    ``net.parameters()`` order and input_grad is dLoss/dInput, which lets
    callers chain networks (generator feeding discriminator/classifier).
    """
    if len(activations) != len(net.specs) + 1:
        raise DimensionError(
            f"expected {len(net.specs) + 1} activation arrays, got {len(activations)}"
        )
    for spec, a in zip(net.specs, activations[1:]):
        if a.shape[1] != spec.output_dim:
            raise DimensionError("activations do not match this network's layer dims")
    out_grad = np.asarray(out_grad, dtype=float)
    if out_grad.shape != activations[-1].shape:
        raise DimensionError(
            f"out_grad shape {out_grad.shape} != output shape {activations[-1].shape}"
        )

    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.specs))
    g = out_grad
    for k in range(len(net.specs) - 1, -1, -1):
        dz = g * _activation_deriv(activations[k + 1], net.specs[k])
        grads[2 * k] = activations[k].T @ dz
        grads[2 * k + 1] = dz.sum(axis=0)
        g = dz @ net.weights[k].T
    return grads, g


def bce_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy, mean over elements, with its gradient wrt pred.

    Predictions are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs, so a
    perfectly confident prediction costs at most the clamp floor instead of inf.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionError(f"pred shape {pred.shape} != target shape {target.shape}")
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    n = p.size
    loss = -float(np.sum(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))) / n
    grad = (p - target) / (p * (1.0 - p)) / n
    return loss, grad


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements, with its gradient wrt pred."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n


@dataclass
class AdamState:
    """Adam moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
            **kw,
        )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One in-place Adam update. Deterministic given (params, grads, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params/grads/state lengths disagree")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"grad shape {g.shape} != param shape {p.shape}")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return params, state


def network_loss(
    net: DenseNetwork, batch: np.ndarray, targets: np.ndarray, loss: str = "auto"
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Forward + loss + full backward pass in one call.

    Returns (loss_value, param_grads, activations). ``loss`` is "bce", "mse",
    or "auto" (bce when the head is a sigmoid, mse otherwise).
    """
    if loss == "auto":
        loss = "bce" if net.specs[-1].activation == "sigmoid" else "mse"
    acts = forward(net, batch)
    targets = np.asarray(targets, dtype=float).reshape(acts[-1].shape)
    fn = bce_loss if loss == "bce" else mse_loss
    value, out_grad = fn(acts[-1], targets)
    grads, _ = backward(net, acts, out_grad)
    return value, grads, acts


def gradient_check(
    net: DenseNetwork,
    batch: np.ndarray,
    targets: np.ndarray,
    loss: str = "auto",
    fd_step: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Diagnostic only; meant for nets small enough (<= ~1e4 params) that the
    O(params) finite-difference sweep stays fast.
    """
    if loss == "auto":
        loss = "bce" if net.specs[-1].activation == "sigmoid" else "mse"

    def loss_value() -> float:
        acts = forward(net, batch)
        t = np.asarray(targets, dtype=float).reshape(acts[-1].shape)
        fn = bce_loss if loss == "bce" else mse_loss
        return fn(acts[-1], t)[0]

    _, analytic, _ = network_loss(net, batch, targets, loss=loss)
    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + fd_step
            hi = loss_value()
            flat[i] = orig - fd_step
            lo = loss_value()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * fd_step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator):
    """Yield shuffled index arrays covering range(n) in chunks of batch_size."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def guard_finite(value: float, what: str, iteration: int, limit: float = 1e3):
    """Divergence guard shared by the training loops."""
    if not np.isfinite(value) or abs(value) > limit:
        raise TrainingError(f"{what} diverged at iteration {iteration}: {value!r}")


def network_to_document(net: DenseNetwork) -> dict:
    """Self-describing checkpoint document (JSON-serializable)."""
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layers": [
            {
                "input_dim": s.input_dim,
                "output_dim": s.output_dim,
                "activation": s.activation,
                "slope": s.slope,
            }
            for s in net.specs
        ],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_document(doc: dict) -> DenseNetwork:
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DimensionError(f"unsupported checkpoint format_version: {version!r}")
    specs = [
        LayerSpec(
            input_dim=d["input_dim"],
            output_dim=d["output_dim"],
            activation=d["activation"],
            slope=d.get("slope", 0.2),
        )
        for d in doc["layers"]
    ]
    _check_chain(specs)
    weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    for spec, w, b in zip(specs, weights, biases):
        if w.shape != (spec.input_dim, spec.output_dim) or b.shape != (spec.output_dim,):
            raise DimensionError("checkpoint parameter shapes do not match layer specs")
    return DenseNetwork(specs=specs, weights=weights, biases=biases)


def save_network(net: DenseNetwork, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_document(net), fh)


def load_network(path) -> DenseNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_document(json.load(fh))
