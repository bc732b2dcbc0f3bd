"""Backpropagation training of bias-free stride-pooled CNNs, plain numpy + Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cnn import CONV, LayerGeometry, NetworkSpec, accuracy, as_image, layer_inputs, toy_mnist_network
from .errors import NonConvergence
from .photonic import Nonlinearity

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 64
    learning_rate: float = 3e-3
    weight_decay: float = 0.0
    lr_decay: float = 0.85  # multiplicative, per epoch
    seed: int = 0
    min_train_accuracy: float = 0.95


@dataclass
class TrainResult:
    weights: list[np.ndarray]
    initial_loss: float
    epoch_losses: list[float] = field(default_factory=list)
    train_accuracy: float = 0.0


def _nl_grad(nl: Nonlinearity, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if nl is Nonlinearity.RELU:
        return (z > 0).astype(z.dtype)
    if nl is Nonlinearity.SIGMOID:
        return a * (1.0 - a)
    if nl is Nonlinearity.TANH:
        return 1.0 - a * a
    return np.ones_like(z)


def col2im(d_patches: np.ndarray, g: LayerGeometry) -> np.ndarray:
    """Adjoint of ``extract_patches``: scatter-add patch gradients back onto the image."""
    lead = d_patches.shape[:-2]
    o = g.out_width
    d = d_patches.reshape(*lead, o, o, g.k, g.k, g.c)
    padded = np.zeros((*lead, g.w + 2 * g.p, g.w + 2 * g.p, g.c))
    span = g.s * (o - 1) + 1
    for i in range(g.k):
        for j in range(g.k):
            padded[..., i : i + span : g.s, j : j + span : g.s, :] += d[..., i, j, :]
    return padded[..., g.p : g.p + g.w, g.p : g.p + g.w, :]


def _stream_grad_to_prev(net: NetworkSpec, i: int, d_inputs: np.ndarray, prev_shape) -> np.ndarray:
    layer = net.layers[i]
    if layer.kind == CONV:
        img_grad = col2im(d_inputs, layer.geometry)
        return img_grad.reshape(prev_shape)
    return d_inputs.reshape(prev_shape)


def _loss_and_grads(net, weights, x, y):
    # forward, keeping every layer's input stream and pre-activation
    cache = []
    a = x
    for i, (layer, m) in enumerate(zip(net.layers, weights)):
        inp = layer_inputs(net, a, i)
        z = inp @ m.T
        prev_shape = a.shape
        a = layer.nonlinearity(z)
        cache.append((inp, z, a, prev_shape))
    logits = a.reshape(len(x), -1)
    logits = logits - logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(len(y)), y]))

    grad_a = np.exp(logp)
    grad_a[np.arange(len(y)), y] -= 1.0
    grad_a = (grad_a / len(y)).reshape(a.shape)
    grads = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        inp, z, a_i, prev_shape = cache[i]
        dz = grad_a * _nl_grad(net.layers[i].nonlinearity, z, a_i)
        grads[i] = dz.reshape(-1, dz.shape[-1]).T @ inp.reshape(-1, inp.shape[-1])
        if i:
            grad_a = _stream_grad_to_prev(net, i, dz @ weights[i], prev_shape)
    return loss, grads


def init_weights(net: NetworkSpec, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.normal(0.0, np.sqrt(2.0 / cols), size=(rows, cols)) for rows, cols in (l.shape for l in net.layers)]


def mean_loss(net, weights, images, labels, batch_size=1000) -> float:
    total = 0.0
    for i in range(0, len(images), batch_size):
        xb, yb = images[i : i + batch_size], labels[i : i + batch_size]
        total += _loss_and_grads(net, weights, xb, yb)[0] * len(xb)
    return total / len(images)


def train_reference(images, labels, config: TrainConfig | None = None, net: NetworkSpec | None = None) -> TrainResult:
    """Train ``net`` (default: the toy MNIST network) with minibatch Adam.

    Deterministic for a given seed on one platform. Raises NonConvergence if
    training accuracy stays below ``config.min_train_accuracy`` after the epoch
    budget.
    """
    config = config or TrainConfig()
    net = net or toy_mnist_network()
    x = as_image(images, net.layers[0].geometry)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) != len(y):
        raise ValueError(f"{len(x)} images but {len(y)} labels")
    rng = np.random.default_rng(config.seed)
    weights = init_weights(net, rng)
    m1 = [np.zeros_like(w) for w in weights]
    m2 = [np.zeros_like(w) for w in weights]
    b1, b2, eps = 0.9, 0.999, 1e-8
    result = TrainResult(weights, mean_loss(net, weights, x, y))
    log.info("initial loss %.4f", result.initial_loss)
    step = 0
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        running = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = _loss_and_grads(net, weights, x[idx], y[idx])
            running += loss * len(idx)
            step += 1
            for w, g, a, b in zip(weights, grads, m1, m2):
                a *= b1
                a += (1 - b1) * g
                b *= b2
                b += (1 - b2) * g * g
                w *= 1.0 - lr * config.weight_decay
                w -= lr * (a / (1 - b1**step)) / (np.sqrt(b / (1 - b2**step)) + eps)
        lr *= config.lr_decay
        result.epoch_losses.append(running / len(x))
        log.info("epoch %d loss %.4f", epoch + 1, result.epoch_losses[-1])
        if not np.isfinite(result.epoch_losses[-1]):
            raise NonConvergence(f"loss diverged at epoch {epoch + 1}")
    result.train_accuracy = accuracy(net, weights, x, y)
    if result.train_accuracy < config.min_train_accuracy:
        raise NonConvergence(
            f"train accuracy {result.train_accuracy:.4f} < {config.min_train_accuracy} after {config.epochs} epochs"
        )
    return result
