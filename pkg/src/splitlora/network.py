"""Toy dense classifier with hand-written forward and backward passes.

Inputs are column batches ``x`` of shape (d_in, n). Each hidden layer computes
``act(W x + bias)`` where ``W = w0 + sum_i a_i b_i`` merges a frozen backbone
weight with its adapter stack. A linear head maps the last hidden activation
to one logit per class seen so far and grows as classes arrive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .lora import LoraAdapter, merge

ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, h):
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (z > 0).astype(np.float64)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    w0: np.ndarray
    bias: np.ndarray
    adapters: list[LoraAdapter] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.w0.shape

    def effective_weight(self) -> np.ndarray:
        return merge(self.adapters, self.w0)


@dataclass
class Cache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    weights: list[np.ndarray]
    logits: np.ndarray


@dataclass
class Grads:
    """Gradients of the mean batch loss.

    ``weights[l]`` is taken w.r.t. the merged weight of layer ``l``;
    ``b_current[l]`` w.r.t. the ``b`` factor of that layer's newest adapter
    (None when the layer has no adapter).
    """

    weights: list[np.ndarray]
    b_current: list[np.ndarray | None]
    head_w: np.ndarray
    head_b: np.ndarray
    loss: float | None = None


class ToyNet:
    def __init__(self, layers: list[DenseLayer], activation: str = "tanh",
                 head_w: np.ndarray | None = None, head_b: np.ndarray | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layers = layers
        self.activation = activation
        width = layers[-1].shape[0]
        self.head_w = np.zeros((0, width)) if head_w is None else np.asarray(head_w, dtype=np.float64)
        self.head_b = np.zeros(self.head_w.shape[0]) if head_b is None else np.asarray(head_b, dtype=np.float64)

    @classmethod
    def create(cls, d_in: int, width: int = 64, depth: int = 3, activation: str = "tanh",
               seed=None, n_classes: int = 0, gain: float = 1.0) -> "ToyNet":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        layers = []
        fan_in = d_in
        for _ in range(depth):
            w0 = gain * rng.standard_normal((width, fan_in)) / np.sqrt(fan_in)
            layers.append(DenseLayer(w0=w0, bias=np.zeros(width)))
            fan_in = width
        net = cls(layers, activation)
        net.grow_head(n_classes)
        return net

    @property
    def n_classes(self) -> int:
        return self.head_w.shape[0]

    @property
    def d_in(self) -> int:
        return self.layers[0].shape[1]

    def layer_ids(self) -> list[str]:
        return [f"layer{i}" for i in range(len(self.layers))]

    def grow_head(self, n_classes: int) -> None:
        """Append zero-initialized rows until the head has ``n_classes`` rows."""
        extra = n_classes - self.n_classes
        if extra > 0:
            self.head_w = np.vstack([self.head_w, np.zeros((extra, self.head_w.shape[1]))])
            self.head_b = np.concatenate([self.head_b, np.zeros(extra)])

    def forward(self, x) -> tuple[np.ndarray, Cache]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.d_in:
            raise ShapeError(f"expected inputs of shape ({self.d_in}, n), got {x.shape}")
        inputs, pre, post, weights = [], [], [], []
        h = x
        for layer in self.layers:
            w = layer.effective_weight()
            z = w @ h + layer.bias[:, None]
            inputs.append(h)
            weights.append(w)
            pre.append(z)
            h = _act(self.activation, z)
            post.append(h)
        logits = self.head_w @ h + self.head_b[:, None]
        return logits, Cache(inputs, pre, post, weights, logits)

    def features(self, x) -> np.ndarray:
        return self.forward(x)[1].post[-1]

    def backward(self, cache: Cache, dlogits: np.ndarray) -> Grads:
        """Backpropagate an upstream gradient ``dL/dlogits`` of shape (C, n)."""
        if dlogits.shape != cache.logits.shape:
            raise ShapeError(f"dlogits {dlogits.shape} does not match logits {cache.logits.shape}")
        h_last = cache.post[-1]
        head_w_grad = dlogits @ h_last.T
        head_b_grad = dlogits.sum(axis=1)
        dh = self.head_w.T @ dlogits
        n_layers = len(self.layers)
        w_grads: list[np.ndarray] = [None] * n_layers
        b_grads: list[np.ndarray | None] = [None] * n_layers
        for l in range(n_layers - 1, -1, -1):
            dz = dh * _act_grad(self.activation, cache.pre[l], cache.post[l])
            gw = dz @ cache.inputs[l].T
            w_grads[l] = gw
            adapters = self.layers[l].adapters
            if adapters:
                # chain rule through delta_w = a @ b
                b_grads[l] = adapters[-1].a.T @ gw
            if l > 0:
                dh = cache.weights[l].T @ dz
        return Grads(w_grads, b_grads, head_w_grad, head_b_grad)

    def loss_and_grads(self, x, labels, loss: str = "ce", scale: float = 1.0) -> Grads:
        logits, cache = self.forward(x)
        fn = LOSSES[loss]
        value, dlogits = fn(logits, labels)
        grads = self.backward(cache, scale * dlogits)
        grads.loss = scale * value
        return grads

    def loss(self, x, labels, loss: str = "ce") -> float:
        logits, _ = self.forward(x)
        return LOSSES[loss](logits, labels)[0]

    def predict(self, x) -> np.ndarray:
        logits, _ = self.forward(x)
        return np.argmax(logits, axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[1]
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= logits.shape[0]):
        raise ShapeError(f"labels must lie in [0, {logits.shape[0]})")
    z = logits - logits.max(axis=0, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=0))
    idx = np.arange(n)
    value = float(np.mean(logsum - z[labels, idx]))
    grad = softmax(logits)
    grad[labels, idx] -= 1.0
    return value, grad / n


def squared_error(outputs: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean over examples of ``0.5 * ||output - target||^2``."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != outputs.shape:
        raise ShapeError(f"targets {targets.shape} do not match outputs {outputs.shape}")
    n = outputs.shape[1]
    r = outputs - targets
    return float(0.5 * np.sum(r * r) / n), r / n


LOSSES = {"ce": cross_entropy, "mse": squared_error}


def accuracy(net: ToyNet, x, labels, classes=None) -> float:
    """Fraction of correct predictions.

    With ``classes`` given, the prediction is the argmax over those logits only.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    if classes is None:
        return float(np.mean(net.predict(x) == labels))
    classes = np.asarray(sorted(classes))
    logits, _ = net.forward(np.asarray(x, dtype=np.float64))
    return float(np.mean(classes[np.argmax(logits[classes], axis=0)] == labels))
