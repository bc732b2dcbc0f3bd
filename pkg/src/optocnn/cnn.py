"""Patch streams, repatching and the forward pass of a stride-pooled CNN without biases.

Image tensors are ``(w, w, c)`` (height, width, channel); patches are the
``k x k x c`` window flattened in that same row / column / channel order, and
patches of one image are emitted row-major. Every function also accepts
leading batch axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, GeometryMismatch
from .photonic import Nonlinearity, apply_layer, as_kernel_matrix

WEIGHTS_VERSION = 1
CONV = "conv"
FULLY_CONNECTED = "fully_connected"


@dataclass(frozen=True)
class LayerGeometry:
    w: int
    k: int
    s: int = 1
    p: int = 0
    c: int = 1
    d: int = 1

    def __post_init__(self):
        if min(self.w, self.k, self.s, self.c, self.d) < 1 or self.p < 0:
            raise GeometryMismatch(f"non-positive size in {self}")
        if self.k > self.w + 2 * self.p:
            raise GeometryMismatch(f"kernel {self.k} wider than padded input {self.w + 2 * self.p}")
        if (self.w - self.k + 2 * self.p) % self.s:
            raise GeometryMismatch(
                f"(w - k + 2p) = {self.w - self.k + 2 * self.p} is not divisible by stride {self.s}"
            )

    @property
    def out_width(self) -> int:
        return (self.w - self.k + 2 * self.p) // self.s + 1

    @property
    def num_patches(self) -> int:
        return self.out_width**2

    @property
    def patch_length(self) -> int:
        return self.k * self.k * self.c

    def to_dict(self) -> dict:
        return {"w": self.w, "k": self.k, "s": self.s, "p": self.p, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class Layer:
    kind: str
    nonlinearity: Nonlinearity
    geometry: LayerGeometry | None = None
    in_dim: int | None = None
    out_dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "nonlinearity", Nonlinearity(self.nonlinearity))
        if self.kind == CONV:
            if self.geometry is None:
                raise GeometryMismatch("conv layer needs a geometry")
        elif self.kind == FULLY_CONNECTED:
            if not (self.in_dim and self.out_dim and self.in_dim > 0 and self.out_dim > 0):
                raise GeometryMismatch("fully connected layer needs positive in_dim and out_dim")
        else:
            raise GeometryMismatch(f"unknown layer kind {self.kind!r}")

    @classmethod
    def conv(cls, w, k, s=1, p=0, c=1, d=1, nonlinearity="relu") -> "Layer":
        return cls(CONV, nonlinearity, LayerGeometry(w, k, s, p, c, d))

    @classmethod
    def fully_connected(cls, in_dim, out_dim, nonlinearity="relu") -> "Layer":
        return cls(FULLY_CONNECTED, nonlinearity, in_dim=in_dim, out_dim=out_dim)

    @property
    def shape(self) -> tuple[int, int]:
        """Kernel matrix shape (rows, cols)."""
        if self.kind == CONV:
            return self.geometry.d, self.geometry.patch_length
        return self.out_dim, self.in_dim

    def geometry_dict(self) -> dict:
        if self.kind == CONV:
            return self.geometry.to_dict()
        return {"in_dim": self.in_dim, "out_dim": self.out_dim}


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise GeometryMismatch("network has no layers")
        if layers[0].kind != CONV:
            raise GeometryMismatch("first layer must be a convolution (it defines the input image)")
        for prev, cur in zip(layers, layers[1:]):
            if cur.kind == CONV:
                g, pg = cur.geometry, prev.geometry
                if prev.kind != CONV or (g.w, g.c) != (pg.out_width, pg.d):
                    raise GeometryMismatch(f"layer {cur} does not accept the output of {prev}")
            else:
                size = prev.geometry.num_patches * prev.geometry.d if prev.kind == CONV else prev.out_dim
                if cur.in_dim != size:
                    raise GeometryMismatch(f"fully connected in_dim {cur.in_dim} != previous output {size}")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        g = self.layers[0].geometry
        return g.w, g.w, g.c

    @property
    def num_outputs(self) -> int:
        last = self.layers[-1]
        return last.out_dim if last.kind == FULLY_CONNECTED else last.geometry.num_patches * last.geometry.d


def toy_mnist_network() -> NetworkSpec:
    """Two stride-2 convolutions and two fully connected layers for 28x28 digits."""
    return NetworkSpec((
        Layer.conv(w=28, k=4, s=2, p=1, c=1, d=8),
        Layer.conv(w=14, k=4, s=2, p=1, c=8, d=16),
        Layer.fully_connected(7 * 7 * 16, 64),
        Layer.fully_connected(64, 10, nonlinearity="identity"),
    ))


def as_image(img, g: LayerGeometry) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim >= 2 and g.c == 1 and img.shape[-2:] == (g.w, g.w):
        img = img[..., None]
    if img.ndim < 3 or img.shape[-3:] != (g.w, g.w, g.c):
        raise GeometryMismatch(f"image shape {img.shape} does not match (w, w, c) = {(g.w, g.w, g.c)}")
    return img


def extract_patches(img, g: LayerGeometry) -> np.ndarray:
    """im2col with zero padding and stride: ``(..., w, w, c) -> (..., n_patches, k*k*c)``."""
    img = as_image(img, g)
    lead = img.shape[:-3]
    if g.p:
        img = np.pad(img, [(0, 0)] * len(lead) + [(g.p, g.p), (g.p, g.p), (0, 0)])
    win = np.lib.stride_tricks.sliding_window_view(img, (g.k, g.k), axis=(-3, -2))
    win = win[..., :: g.s, :: g.s, :, :, :]  # (..., out, out, c, k, k)
    win = np.moveaxis(win, -3, -1)  # (..., out, out, k, k, c)
    return win.reshape(*lead, g.num_patches, g.patch_length)


def stream_to_image(outputs) -> np.ndarray:
    """Reinterpret a ``(..., T, d)`` output stream as the ``(..., w, w, d)`` image it encodes."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim < 2:
        raise GeometryMismatch("output stream must be (T, d)")
    t = outputs.shape[-2]
    w = math.isqrt(t)
    if w * w != t:
        raise GeometryMismatch(f"stream length {t} is not a perfect square")
    return outputs.reshape(*outputs.shape[:-2], w, w, outputs.shape[-1])


def repatch(outputs, g_next: LayerGeometry) -> np.ndarray:
    img = stream_to_image(outputs)
    if img.shape[-3] != g_next.w or img.shape[-1] != g_next.c:
        raise GeometryMismatch(
            f"stream encodes a {img.shape[-3]}x{img.shape[-3]}x{img.shape[-1]} image, "
            f"next layer expects {g_next.w}x{g_next.w}x{g_next.c}"
        )
    return extract_patches(img, g_next)


def check_weights(net: NetworkSpec, weights: Sequence) -> list[np.ndarray]:
    if len(weights) != len(net.layers):
        raise DimensionMismatch(f"{len(weights)} weight matrices for {len(net.layers)} layers")
    out = []
    for i, (layer, m) in enumerate(zip(net.layers, weights)):
        m = as_kernel_matrix(m)
        if m.shape != layer.shape:
            raise DimensionMismatch(f"layer {i}: kernel matrix {m.shape}, expected {layer.shape}")
        out.append(m)
    return out


def layer_inputs(net: NetworkSpec, x: np.ndarray, i: int) -> np.ndarray:
    """Patch stream fed to layer ``i`` given the previous layer's stream (or the image for i = 0)."""
    layer = net.layers[i]
    if i == 0:
        return extract_patches(x, layer.geometry)
    if layer.kind == CONV:
        return repatch(x, layer.geometry)
    # a fully connected layer sees the whole previous volume as one patch
    return x.reshape(*x.shape[:-2], 1, x.shape[-2] * x.shape[-1])


def forward(net: NetworkSpec, weights: Sequence, images) -> np.ndarray:
    """Class scores for one image ``(w, w, c)`` or a batch ``(B, w, w, c)``."""
    weights = check_weights(net, weights)
    x = as_image(images, net.layers[0].geometry)
    for i, (layer, m) in enumerate(zip(net.layers, weights)):
        x = apply_layer(m, layer_inputs(net, x, i), layer.nonlinearity)
    return x.reshape(*x.shape[:-2], -1)


def infer(net: NetworkSpec, weights: Sequence, img) -> np.ndarray:
    img = as_image(img, net.layers[0].geometry)
    if img.ndim != 3:
        raise DimensionMismatch(f"infer takes one image, got shape {img.shape}; use forward for batches")
    return forward(net, weights, img)


def infer_batch(net: NetworkSpec, weights: Sequence, images, batch_size: int = 1000) -> np.ndarray:
    images = as_image(images, net.layers[0].geometry)
    weights = check_weights(net, weights)
    chunks = [forward(net, weights, images[i : i + batch_size]) for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, net.num_outputs))


def predict(scores) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(scores, axis=-1)


def accuracy(net: NetworkSpec, weights: Sequence, images, labels) -> float:
    return float(np.mean(predict(infer_batch(net, weights, images)) == np.asarray(labels)))


# weight files


def weights_to_json(net: NetworkSpec, weights: Sequence) -> str:
    weights = check_weights(net, weights)
    layers = []
    for layer, m in zip(net.layers, weights):
        entries = ", ".join(repr(float(x)) for x in m.ravel())
        layers.append(
            "    {"
            f'"kind": "{layer.kind}", "nonlinearity": "{layer.nonlinearity.value}", '
            f'"geometry": {json.dumps(layer.geometry_dict())}, '
            f'"rows": {m.shape[0]}, "cols": {m.shape[1]}, "entries": [{entries}]'
            "}"
        )
    return f'{{\n  "version": {WEIGHTS_VERSION},\n  "layers": [\n' + ",\n".join(layers) + "\n  ]\n}\n"


def weights_from_dict(doc: dict) -> tuple[NetworkSpec, list[np.ndarray]]:
    if doc.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weight file version {doc.get('version')!r}")
    layers, weights = [], []
    for entry in doc["layers"]:
        geo = entry["geometry"]
        nl = entry.get("nonlinearity", "relu")
        if entry["kind"] == CONV:
            layers.append(Layer(CONV, nl, LayerGeometry(**geo)))
        else:
            layers.append(Layer.fully_connected(geo["in_dim"], geo["out_dim"], nl))
        m = np.asarray(entry["entries"], dtype=np.float64)
        if m.size != entry["rows"] * entry["cols"]:
            raise DimensionMismatch(f"layer has {m.size} entries, expected {entry['rows']}x{entry['cols']}")
        weights.append(m.reshape(entry["rows"], entry["cols"]))
    net = NetworkSpec(tuple(layers))
    return net, check_weights(net, weights)


def weights_from_json(text: str) -> tuple[NetworkSpec, list[np.ndarray]]:
    return weights_from_dict(json.loads(text))
