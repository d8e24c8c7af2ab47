"""Small fully-connected softmax classifier trained with plain minibatch SGD.

Parameters live in a single flat float64 vector so that aggregation is a
coordinate-wise operation. Layout, per layer in order: the ``fan_in x fan_out``
weight matrix in row-major order, then the ``fan_out`` bias vector.

Randomness comes from numpy's ``Generator`` backed by PCG64, seeded from plain
integers; identical inputs give bitwise-identical outputs within one build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, ContractViolation, ShapeError

if TYPE_CHECKING:
    from .data import LabeledDataset


@dataclass(frozen=True)
class Architecture:
    """Layer widths: input dimension, hidden widths, class count."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ConfigError("architecture needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be >= 1, got {list(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layers(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layers)


@dataclass(frozen=True)
class ModelParams:
    arch: Architecture
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.arch.param_count:
            raise ShapeError(
                f"expected {self.arch.param_count} parameters for {list(self.arch.layer_sizes)}, "
                f"got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def layer_views(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _unpack(self.arch, self.values)

    def copy(self) -> ModelParams:
        return ModelParams(self.arch, self.values.copy())


@dataclass(frozen=True)
class PerfScore:
    accuracy: float
    mean_loss: float

    def value(self, basis: str) -> float:
        """Score on ``basis`` ("accuracy" or "loss"), raw, not sign-adjusted."""
        if basis == "accuracy":
            return self.accuracy
        if basis == "loss":
            return self.mean_loss
        raise ConfigError(f"unknown score basis {basis!r}")


@dataclass(frozen=True)
class Hyper:
    batch_size: int
    local_epochs: int
    learning_rate: float
    rounds: int

    def __post_init__(self) -> None:
        for name in ("batch_size", "local_epochs", "rounds"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"must be a positive integer, got {v!r}", name)
        lr = self.learning_rate
        if isinstance(lr, bool) or not isinstance(lr, (int, float)) or not math.isfinite(lr) or lr <= 0:
            raise ConfigError(f"must be a positive real, got {lr!r}", "learning_rate")

    def steps_per_epoch(self, n: int) -> int:
        return math.ceil(n / self.batch_size)


def _unpack(arch: Architecture, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    pos = 0
    for fan_in, fan_out in arch.layers:
        w = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        out.append((w, b))
    return out


def init_model(arch: Architecture, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if not isinstance(arch, Architecture):
        raise ConfigError(f"expected an Architecture, got {type(arch).__name__}")
    rng = np.random.default_rng(seed)
    values = np.zeros(arch.param_count)
    for w, _ in _unpack(arch, values):
        fan_in, fan_out = w.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return ModelParams(arch, values)


def _check_features(model: ModelParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.arch.input_dim:
        raise ShapeError(f"features of shape {x.shape} do not match input dim {model.arch.input_dim}")
    return x


def _logits(model: ModelParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Output logits and the input activation of every layer (for backprop)."""
    layers = model.layer_views()
    acts = [x]
    h = x
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        if k < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return h, acts


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per sample."""
    z, _ = _logits(model, _check_features(model, features))
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. ``model.values``."""
    x = _check_features(model, features)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ContractViolation("loss_and_grad called with an empty batch")
    if y.shape != (n,):
        raise ShapeError(f"labels shape {y.shape} does not match {n} samples")
    k = model.arch.num_classes
    if y.min() < 0 or y.max() >= k:
        raise ContractViolation(f"labels must lie in [0, {k})")

    z, acts = _logits(model, x)
    logp = _log_softmax(z)
    rows = np.arange(n)
    loss = float(-logp[rows, y].mean())

    grad = np.zeros_like(model.values)
    grad_layers = _unpack(model.arch, grad)
    layers = model.layer_views()
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= n
    for idx in range(len(layers) - 1, -1, -1):
        gw, gb = grad_layers[idx]
        gw[...] = acts[idx].T @ delta
        gb[...] = delta.sum(axis=0)
        if idx > 0:
            delta = (delta @ layers[idx][0].T) * (acts[idx] > 0.0)
    return loss, grad


def local_train(model: ModelParams, data: LabeledDataset, h: Hyper, seed: int) -> tuple[ModelParams, int]:
    """Run ``h.local_epochs`` epochs of minibatch SGD on a copy of ``model``.

    Each epoch visits a fresh seeded permutation of the data in batches of
    ``h.batch_size`` (the last one may be short). When a single batch covers
    the whole dataset the permutation is skipped, since it cannot change the
    gradient and skipping it keeps full-batch runs order-independent.

    Returns the trained copy and the number of SGD steps taken.
    """
    n = len(data)
    if n == 0:
        raise ContractViolation("local_train called with an empty dataset")
    rng = np.random.default_rng(seed)
    values = model.values.copy()
    trained = ModelParams(model.arch, values)
    x, y = data.features, data.labels
    b = h.batch_size
    steps = 0
    for _ in range(h.local_epochs):
        order = rng.permutation(n) if n > b else None
        for start in range(0, n, b):
            if order is None:
                xb, yb = x, y
            else:
                idx = order[start:start + b]
                xb, yb = x[idx], y[idx]
            _, g = loss_and_grad(trained, xb, yb)
            values -= h.learning_rate * g
            steps += 1
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("local training diverged to non-finite parameters; lower the learning rate")
    return trained, steps


def evaluate(model: ModelParams, data: LabeledDataset) -> PerfScore:
    """Argmax accuracy (ties go to the lowest class index) and mean cross-entropy."""
    n = len(data)
    if n == 0:
        raise ContractViolation("evaluate called with an empty dataset")
    z, _ = _logits(model, _check_features(model, data.features))
    logp = _log_softmax(z)
    pred = np.argmax(z, axis=1)
    acc = float(np.mean(pred == data.labels))
    loss = float(-logp[np.arange(n), data.labels].mean())
    return PerfScore(accuracy=acc, mean_loss=max(loss, 0.0))
