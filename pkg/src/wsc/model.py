"""Architecture strings and whole-network forward/backward."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .batch import GraphBatch
from .coarsen import CoarseningLayer, target_clusters
from .conv import WSCLayer
from .exceptions import ArchitectureParseError
from .nn import Dropout, Linear, ReLU
from .walks import build_transition, sample_field_paths

_TOKEN = re.compile(r"^(C|P|FC)\(([^()]*)\)$")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "C", "P" or "FC"
    value: float

    def __str__(self):
        if self.kind == "P":
            return f"P({self.value!r})"
        return f"{self.kind}({int(self.value)})"


@dataclass(frozen=True)
class ArchitectureSpec:
    layers: tuple[LayerSpec, ...]

    @property
    def body(self):
        return self.layers[:-1]

    @property
    def fc_width(self) -> int:
        return int(self.layers[-1].value)

    @property
    def conv_widths(self):
        return [int(l.value) for l in self.layers if l.kind == "C"]

    @property
    def pool_ratios(self):
        return [l.value for l in self.layers if l.kind == "P"]

    def __str__(self):
        return "-".join(str(l) for l in self.layers)

    def __len__(self):
        return len(self.layers)

    def vertex_counts(self, m: int) -> list[int]:
        """Vertex count after each layer for an input graph of ``m`` vertices."""
        counts = []
        for layer in self.layers:
            if layer.kind == "P":
                m = target_clusters(m, layer.value)
            elif layer.kind == "FC":
                m = 1
            counts.append(m)
        return counts


def parse_architecture(text: str) -> ArchitectureSpec:
    """Parse strings such as ``C(64)-P(0.25)-C(128)-P(0.0)-FC(256)``.

    Convolutions and coarsenings alternate, starting with a convolution;
    the last coarsening must be ``P(0.0)``; exactly one ``FC`` ends the net.
    """
    text = text.strip()
    if not text:
        raise ArchitectureParseError("empty architecture string", 0)
    layers = []
    pos = 0
    for tok in text.split("-"):
        m = _TOKEN.match(tok.strip())
        if m is None:
            raise ArchitectureParseError(f"malformed token {tok!r}", pos)
        kind, arg = m.groups()
        try:
            if kind == "P":
                value = float(arg)
                if not 0 <= value < 1:
                    raise ArchitectureParseError(f"coarsening ratio {arg} outside [0, 1)", pos)
            else:
                value = int(arg)
                if value < 1:
                    raise ArchitectureParseError(f"width must be positive in {tok!r}", pos)
        except ValueError:
            raise ArchitectureParseError(f"bad argument in {tok!r}", pos) from None
        layers.append(LayerSpec(kind, value))
        pos += len(tok) + 1

    if layers[-1].kind != "FC":
        raise ArchitectureParseError("architecture must end with FC(width)", len(text))
    offset = 0
    for i, layer in enumerate(layers[:-1]):
        expected = "C" if i % 2 == 0 else "P"
        if layer.kind != expected:
            raise ArchitectureParseError(
                f"expected {expected} at layer {i + 1}, got {layer.kind}", offset
            )
        if layer.kind == "P" and layer.value == 0 and i != len(layers) - 2:
            raise ArchitectureParseError("P(0.0) must be the last coarsening", offset)
        offset += len(str(layer)) + 1
    body = layers[:-1]
    if body and (body[-1].kind != "P" or body[-1].value != 0):
        raise ArchitectureParseError("the coarsening before FC must be P(0.0)", offset)
    return ArchitectureSpec(tuple(layers))


def walk_seed(*keys):
    return np.random.default_rng([int(k) for k in keys])


class WSCNetwork:
    """Stacked WSC convolutions and coarsenings, an FC layer and a linear head.

    Walk fields are sampled on whichever (possibly coarsened) graph each
    convolution receives. A body without coarsening layers is read out by a
    global max-pool before the FC layer.
    """

    def __init__(self, spec, n_features, n_classes, T=3, C=3, K=8, dropout=0.5, seed=0, phi_hidden=16,
                 feature_norm="power"):
        if isinstance(spec, str):
            spec = parse_architecture(spec)
        self.spec = spec
        self.n_features, self.n_classes = n_features, n_classes
        self.T, self.C, self.K = T, C, K
        rng = np.random.default_rng(seed)
        self.body = []
        width = n_features
        n_conv = n_pool = 0
        for layer in spec.body:
            if layer.kind == "C":
                n_conv += 1
                self.body.append(
                    WSCLayer(f"conv{n_conv}", width, int(layer.value), T, C, K, rng,
                             normalize=feature_norm)
                )
                width = int(layer.value)
            else:
                n_pool += 1
                self.body.append(
                    CoarseningLayer(f"pool{n_pool}", width, layer.value, rng, hidden=phi_hidden)
                )
        if not spec.body:
            self.body.append(CoarseningLayer("readout", width, 0.0, rng))
        self.fc = Linear("fc", width, spec.fc_width, rng)
        self.fc_relu = ReLU()
        self.dropout = Dropout(dropout)
        self.head = Linear("head", spec.fc_width, n_classes, rng)

    @property
    def parameters(self):
        params = []
        for layer in self.body:
            params.extend(layer.parameters)
        params.extend(self.fc.parameters)
        params.extend(self.head.parameters)
        return params

    def named_parameters(self):
        return {p.name: p for p in self.parameters}

    def embed(self, batch: GraphBatch, walk_rng_keys=(0,)):
        """Graph-level features entering the FC layer (one row per graph)."""
        for i, layer in enumerate(self.body):
            if isinstance(layer, WSCLayer):
                tm = build_transition(batch.adjacency)
                fields = sample_field_paths(tm, self.T, self.K, walk_seed(*walk_rng_keys, i))
                batch = GraphBatch(batch.adjacency, layer.forward(batch.attributes, fields), batch.ptr)
            else:
                batch = layer.forward(batch)
        return batch.attributes

    def forward(self, batch: GraphBatch, training=False, walk_rng_keys=(0,), dropout_rng=None):
        h = self.embed(batch, walk_rng_keys)
        h = self.fc_relu.forward(self.fc.forward(h))
        if training and dropout_rng is None:
            dropout_rng = walk_seed(*walk_rng_keys, 7919)
        h = self.dropout.forward(h, training, dropout_rng)
        return self.head.forward(h)

    def backward(self, d_logits):
        g = self.head.backward(d_logits)
        g = self.dropout.backward(g)
        g = self.fc.backward(self.fc_relu.backward(g))
        for layer in reversed(self.body):
            g = layer.backward(g)
        return g

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()
