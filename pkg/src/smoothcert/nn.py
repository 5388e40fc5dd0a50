"""Small feedforward soft classifiers with exact reverse-mode gradients.

Weights are stored ``(out, in)``; inputs are rows. Every forward function
accepts a single vector ``(d,)`` or a batch ``(B, d)`` and returns the
matching shape. Softmax is applied only on the way out, never stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

P_FLOOR = 1e-12
ACTIVATIONS = ("relu", "tanh", "identity")
MODEL_HEADER = "smoothcert-model v1"


class DimensionError(ValueError):
    def __init__(self, expected, actual, what="input"):
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float, ndmin=2)
        self.bias = np.array(self.bias, dtype=float).ravel()
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise DimensionError(self.weight.shape[0], self.bias.shape[0], "bias")


@dataclass
class Network:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for k in range(1, len(self.layers)):
            prev_out = self.layers[k - 1].weight.shape[0]
            cur_in = self.layers[k].weight.shape[1]
            if prev_out != cur_in:
                raise DimensionError(prev_out, cur_in, f"layer {k} input")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        for layer in self.layers:
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ValueError("network parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "Network":
        return Network([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


@dataclass
class GradientBundle:
    input_grad: np.ndarray
    weight_grads: list[np.ndarray] = field(default_factory=list)
    bias_grads: list[np.ndarray] = field(default_factory=list)


def init_network(sizes, activation="relu", seed=0) -> Network:
    """Glorot-uniform layers for ``sizes = (d, h1, ..., num_classes)``.

    Hidden layers use ``activation``; the output layer is affine.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        act = activation if k < len(sizes) - 2 else "identity"
        layers.append(Layer(rng.uniform(-a, a, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return Network(layers)


def _activate(z, name):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z, a, name):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(net: Network, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionError(net.input_dim, X.shape[-1] if X.ndim else 0)
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite values")
    return X, single


def _forward(net: Network, X):
    pre, post = [], [X]
    a = X
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
    return pre, post


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _backprop(net: Network, pre, post, dlogits):
    """Push d(loss)/d(logits) back; returns (dX, weight grads, bias grads)."""
    dWs = [None] * len(net.layers)
    dbs = [None] * len(net.layers)
    delta = dlogits
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        delta = delta * _activation_grad(pre[k], post[k + 1], layer.activation)
        dWs[k] = delta.T @ post[k]
        dbs[k] = delta.sum(axis=0)
        delta = delta @ layer.weight
    return delta, dWs, dbs


def logits(net: Network, x):
    X, single = _as_batch(net, x)
    out = _forward(net, X)[1][-1]
    return out[0] if single else out


def soft_forward(net: Network, x):
    X, single = _as_batch(net, x)
    probs = _softmax(_forward(net, X)[1][-1])
    return probs[0] if single else probs


def hard_forward(net: Network, x):
    """Argmax class; np.argmax already breaks ties toward the lowest index."""
    X, single = _as_batch(net, x)
    labels = np.argmax(_forward(net, X)[1][-1], axis=1)
    return int(labels[0]) if single else labels


def loss_ce(probs, y) -> float:
    probs = np.asarray(probs, dtype=float)
    if not 0 <= int(y) < probs.shape[-1]:
        raise ValueError(f"class index {y} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[int(y)], P_FLOOR)))


def _check_labels(net: Network, Y):
    Y = np.asarray(Y, dtype=int)
    if (Y < 0).any() or (Y >= net.num_classes).any():
        raise ValueError(f"class index out of range for {net.num_classes} classes")
    return Y


def backward(net: Network, x, y):
    """Cross-entropy loss and its exact gradients.

    For a single example returns ``(loss, bundle)``. For a batch, the loss
    and parameter gradients are averaged over rows while ``input_grad``
    keeps one row per example (each row is the gradient of that example's
    own loss).
    """
    X, single = _as_batch(net, x)
    Y = _check_labels(net, np.atleast_1d(y))
    if Y.shape[0] != X.shape[0]:
        raise DimensionError(X.shape[0], Y.shape[0], "label count")
    pre, post = _forward(net, X)
    P = _softmax(post[-1])
    rows = np.arange(len(Y))
    py = P[rows, Y]
    clamped = py < P_FLOOR
    losses = -np.log(np.maximum(py, P_FLOOR))
    dlogits = P.copy()
    dlogits[rows, Y] -= 1.0
    dlogits[clamped] = 0.0
    B = X.shape[0]
    dX, dWs, dbs = _backprop(net, pre, post, dlogits)
    bundle = GradientBundle(dX[0] if single else dX,
                            [g / B for g in dWs], [g / B for g in dbs])
    return float(losses.mean()), bundle


def class_prob_input_grad(net: Network, X, y):
    """Rows of ``F(X)_y`` and ``d F(X)_y / dX`` for a batch sharing label ``y``
    (``y`` may also be a per-row label array)."""
    X, _ = _as_batch(net, X)
    Y = np.broadcast_to(_check_labels(net, y), (X.shape[0],))
    pre, post = _forward(net, X)
    P = _softmax(post[-1])
    rows = np.arange(X.shape[0])
    py = P[rows, Y]
    # dF_y/dlogits = F_y (e_y - F)
    dlogits = -py[:, None] * P
    dlogits[rows, Y] += py
    dX, _, _ = _backprop(net, pre, post, dlogits)
    return py, dX


def sgd_step(net: Network, grads: GradientBundle, lr: float) -> Network:
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    if len(grads.weight_grads) != len(net.layers) or len(grads.bias_grads) != len(net.layers):
        raise DimensionError(len(net.layers), len(grads.weight_grads), "gradient layer count")
    layers = []
    for layer, gw, gb in zip(net.layers, grads.weight_grads, grads.bias_grads):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise DimensionError(layer.weight.shape, gw.shape, "weight gradient")
        layers.append(Layer(layer.weight - lr * gw, layer.bias - lr * gb, layer.activation))
    return Network(layers)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def format_model(net: Network, sigma: float) -> str:
    lines = [MODEL_HEADER,
             f"input_dim {net.input_dim}",
             f"num_classes {net.num_classes}",
             f"sigma {_fmt(sigma)}",
             f"layers {len(net.layers)}"]
    for layer in net.layers:
        out_dim, in_dim = layer.weight.shape
        lines.append(f"layer {out_dim} {in_dim} {layer.activation}")
        lines.append(" ".join(_fmt(v) for v in layer.weight.ravel()))
        lines.append(" ".join(_fmt(v) for v in layer.bias))
    return "\n".join(lines) + "\n"


def parse_model(text: str):
    """Inverse of :func:`format_model`; returns ``(network, sigma)``."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != MODEL_HEADER:
        raise ValueError(f"not a model file: expected header {MODEL_HEADER!r}")

    def keyed(idx, key):
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0] != key:
            raise ValueError(f"model line {idx + 1}: expected '{key} <value>'")
        return parts[1]

    try:
        input_dim = int(keyed(1, "input_dim"))
        num_classes = int(keyed(2, "num_classes"))
        sigma = float(keyed(3, "sigma"))
        n_layers = int(keyed(4, "layers"))
        layers = []
        pos = 5
        for _ in range(n_layers):
            _, out_dim, in_dim, act = lines[pos].split()
            out_dim, in_dim = int(out_dim), int(in_dim)
            w = np.array([float(t) for t in lines[pos + 1].split()])
            b = np.array([float(t) for t in lines[pos + 2].split()])
            if w.size != out_dim * in_dim or b.size != out_dim:
                raise ValueError(f"model line {pos + 1}: layer value count does not match dims")
            layers.append(Layer(w.reshape(out_dim, in_dim), b, act))
            pos += 3
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    net = Network(layers)
    if net.input_dim != input_dim or net.num_classes != num_classes:
        raise ValueError("model header dims disagree with layer shapes")
    return net, sigma


def save_model(net: Network, sigma: float, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_model(net, sigma))


def load_model(path):
    with open(path) as fh:
        return parse_model(fh.read())
