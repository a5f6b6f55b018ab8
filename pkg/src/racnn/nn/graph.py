"""Sequential graphs: construction, forward/backward, toy model pairs."""

from dataclasses import dataclass

import numpy as np

from .. import config
from ..errors import CacheError, ShapeError
from ..tensor import make_rng
from .layers import Conv, Dense, Flatten, LayerSpec, MaxPool2, RacnnConv, ReLU, softmax_xent


def _build_layer(spec, in_shape, rng, alpha_bias, dtype):
    kind = spec.kind
    if kind in ("std_conv3", "std_conv1"):
        return Conv(in_shape[-1], spec.f, 3 if kind == "std_conv3" else 1, rng=rng, dtype=dtype)
    if kind == "racnn_conv":
        return RacnnConv(in_shape[-1], spec.f, rng=rng, alpha_bias=alpha_bias, dtype=dtype)
    if kind == "relu":
        return ReLU()
    if kind == "maxpool2":
        return MaxPool2()
    if kind == "flatten":
        return Flatten()
    if kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"dense needs flattened input, got {in_shape}")
        return Dense(in_shape[0], spec.units, rng=rng, dtype=dtype)
    raise ValueError(f"cannot build layer {kind!r}")


class Graph:
    """Ordered layers ending in a softmax cross-entropy head.

    Layer ``i`` draws its initial weights from a generator seeded with
    ``(seed, i)``, so two graphs that differ only in conv kind start from
    the same 3x3 weights.
    """

    def __init__(self, specs, input_shape, *, seed=0, alpha_bias=1.0, dtype=None, layers=None):
        specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        if not specs or specs[-1].kind != "softmax_xent":
            specs.append(LayerSpec("softmax_xent"))
        if any(s.kind == "softmax_xent" for s in specs[:-1]):
            raise ValueError("softmax_xent must be the last layer")
        self.specs = specs
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.version = 0
        dt = dtype or config.default_dtype()
        if layers is None:
            layers = []
            shape = self.input_shape
            for i, spec in enumerate(specs[:-1]):
                if spec.kind in ("std_conv3", "std_conv1", "racnn_conv") and spec.d and spec.d != shape[-1]:
                    raise ShapeError(f"layer {i} ({spec.kind}) declares d={spec.d}, input has {shape[-1]}")
                layer = _build_layer(spec, shape, make_rng([seed, i]), alpha_bias, dt)
                shape = layer.out_shape(shape)
                layers.append(layer)
        self.layers = layers
        self.shapes = self._infer_shapes()

    def _infer_shapes(self):
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.out_shape(shapes[-1]))
        return shapes

    @property
    def num_classes(self):
        return self.shapes[-1][0]

    def racnn_layers(self):
        return [(i, layer) for i, layer in enumerate(self.layers) if layer.kind == "racnn_conv"]

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, value in layer.params().items():
                out[f"{i}.{name}"] = value
        return out

    def set_parameters(self, values):
        for i, layer in enumerate(self.layers):
            own = {name: values[f"{i}.{name}"] for name in layer.params()}
            if own:
                layer.set_params(own)
        self.version += 1

    def num_params(self):
        return int(sum(np.size(v) for v in self.parameters().values()))

    def touch(self):
        """Mark cached forward state stale after an in-place weight edit."""
        self.version += 1


@dataclass
class ForwardCache:
    version: int
    layer_caches: list
    logits: np.ndarray


def _as_input(graph, batch):
    if isinstance(batch, (list, tuple)):
        batch = np.stack([np.asarray(b) for b in batch])
    x = np.asarray(batch)
    if x.ndim == len(graph.input_shape):
        x = x[None]
    if tuple(x.shape[1:]) != graph.input_shape:
        raise ShapeError(f"graph expects inputs of shape {graph.input_shape}, got {x.shape[1:]}")
    return np.ascontiguousarray(x, dtype=_graph_dtype(graph))


def _graph_dtype(graph):
    for value in graph.parameters().values():
        return value.dtype
    return np.dtype(config.default_dtype())


def forward(graph, batch, *, sparse=False, tau=0.0):
    """Run every layer but the loss head; returns (logits, caches).

    ``sparse`` routes adaptive layers through the skipping forward (no
    backward possible from such a cache).
    """
    x = _as_input(graph, batch)
    caches = []
    for layer in graph.layers:
        x, cache = layer.forward(x, sparse=sparse, tau=tau)
        caches.append(cache)
    return x, ForwardCache(graph.version, caches, x)


def backward(graph, caches, labels):
    """Parameter gradients of the mean cross-entropy; keyed like ``parameters()``."""
    return loss_and_grads_from_cache(graph, caches, labels)[1]


def loss_and_grads_from_cache(graph, caches, labels):
    if caches is None or caches.version != graph.version:
        raise CacheError("stale or missing forward cache; run forward again")
    loss, g = softmax_xent(caches.logits, labels)
    grads = {}
    for i in range(len(graph.layers) - 1, -1, -1):
        layer = graph.layers[i]
        cache = caches.layer_caches[i]
        if layer.kind == "racnn_conv" and cache["dense"] is None:
            raise CacheError("adaptive layer ran the sparse path; backward needs the dense cache")
        g, layer_grads = layer.backward(cache, g)
        for name, value in layer_grads.items():
            grads[f"{i}.{name}"] = value
    return loss, grads


def loss_and_grads(graph, batch, labels):
    logits, caches = forward(graph, batch)
    return loss_and_grads_from_cache(graph, caches, labels)


def predict(graph, batch, *, sparse=False, tau=0.0):
    logits, _ = forward(graph, batch, sparse=sparse, tau=tau)
    return np.argmax(logits, axis=1)


# -- toy model pairs ------------------------------------------------------

def toy_specs(conv_kind="std_conv3", channels=(8, 16, 16), classes=4, racnn_layers=None):
    """Stage pattern [conv3, relu, maxpool2] x len(channels), then a dense head.

    ``racnn_layers`` (stage indices) selects which stages use the adaptive
    conv when ``conv_kind == "racnn_conv"``; default all.
    """
    specs = []
    for stage, f in enumerate(channels):
        kind = conv_kind
        if conv_kind == "racnn_conv" and racnn_layers is not None and stage not in racnn_layers:
            kind = "std_conv3"
        specs += [LayerSpec(kind, f=f), LayerSpec("relu"), LayerSpec("maxpool2")]
    specs += [LayerSpec("flatten"), LayerSpec("dense", units=classes), LayerSpec("softmax_xent")]
    return specs


def build_toy_pair(input_shape=(16, 16, 1), channels=(8, 16, 16), classes=4, seed=0,
                   alpha_bias=1.0, dtype=None):
    """Standard and adaptive graphs identical except for the conv kind."""
    std = Graph(toy_specs("std_conv3", channels, classes), input_shape,
                seed=seed, dtype=dtype)
    rac = Graph(toy_specs("racnn_conv", channels, classes), input_shape,
                seed=seed, alpha_bias=alpha_bias, dtype=dtype)
    return std, rac


def build_one_swap(input_shape=(16, 16, 1), channels=(8, 16, 16), classes=4, seed=0,
                   alpha_bias=1.0, dtype=None):
    """Adaptive toy graph with its first adaptive stage reverted to a standard conv."""
    keep = set(range(1, len(channels)))
    return Graph(toy_specs("racnn_conv", channels, classes, racnn_layers=keep), input_shape,
                 seed=seed, alpha_bias=alpha_bias, dtype=dtype)
