"""Minimal differentiable building blocks for the WSC network.

Layers follow a forward/backward contract: ``forward`` caches what
``backward`` needs, ``backward`` accumulates into ``Parameter.grad`` and
returns the gradient with respect to the layer input.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, DomainError, UsageError

CHECKPOINT_VERSION = 1


class Parameter:
    __slots__ = ("name", "value", "grad", "momentum_buffer")

    def __init__(self, name, value):
        self.name = name
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.momentum_buffer = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.95
    epochs: int = 400
    batch_size: int = 100
    dropout_rate: float = 0.5
    seed: int = 0
    dampening: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError("dropout_rate must lie in [0, 1)")
        if not 0 <= self.dampening < 1:
            raise ConfigurationError("dampening must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")


def glorot_uniform(fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    """Affine map ``y = x W + b``."""

    def __init__(self, name, fan_in, fan_out, rng):
        self.weight = Parameter(f"{name}.weight", glorot_uniform(fan_in, fan_out, rng))
        self.bias = Parameter(f"{name}.bias", np.zeros(fan_out))
        self._x = None

    @property
    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise UsageError(
                f"{self.weight.name}: input width {x.shape[-1]} != {self.weight.shape[0]}"
            )
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, upstream):
        if self._x is None:
            raise UsageError(f"{self.weight.name}: backward called before forward")
        self.weight.grad += self._x.T @ upstream
        self.bias.grad += upstream.sum(axis=0)
        return upstream @ self.weight.value.T


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, upstream):
        return np.where(self._mask, upstream, 0.0)


def dropout(x, rate, training, rng):
    """Inverted dropout; returns ``(output, mask)``. ``mask`` is None when inactive."""
    if not 0 <= rate < 1:
        raise DomainError("dropout rate must lie in [0, 1)")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


class Dropout:
    def __init__(self, rate):
        self.rate = rate
        self._mask = None

    def forward(self, x, training, rng):
        out, self._mask = dropout(x, self.rate, training, rng)
        return out

    def backward(self, upstream):
        return upstream if self._mask is None else upstream * self._mask


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    n, l = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= l:
        raise DomainError("labels out of range")
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_prob = shifted[np.arange(n), labels] - log_z
    loss = -log_prob.mean()
    grad = np.exp(shifted - log_z[:, None])
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def sgd_step(params, config):
    """Momentum update ``buf = beta buf + (1 - dampening) grad``; zeroes gradients.

    ``dampening = 0`` is classic heavy-ball momentum.
    """
    lr, beta = config.learning_rate, config.momentum
    scale = 1.0 - config.dampening
    for p in params:
        p.momentum_buffer *= beta
        p.momentum_buffer += p.grad if scale == 1.0 else scale * p.grad
        p.value -= lr * p.momentum_buffer
        p.zero_grad()


def config_hash(obj) -> str:
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params, metadata=None):
    """Write parameters by name to an ``.npz`` container with JSON metadata."""
    meta = dict(metadata or {})
    meta["format_version"] = CHECKPOINT_VERSION
    meta["parameters"] = [p.name for p in params]
    arrays = {f"param:{p.name}": p.value for p in params}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(values_by_name, metadata)``."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise UsageError(f"unsupported checkpoint version {meta.get('format_version')}")
        values = {name: data[f"param:{name}"].copy() for name in meta["parameters"]}
    return values, meta
