"""Small dense models on flat parameter vectors, plus local SGD.

Every model here works on a single 1-D float64 array holding all parameters.
Layer ``i`` of an MLP occupies ``fan_in * fan_out`` weights (row-major,
shape ``(fan_in, fan_out)``) followed by ``fan_out`` biases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, ShapeError

ACTIVATIONS = ("relu", "tanh", "none")
LOSSES = ("softmax_cross_entropy", "mse")


@dataclass(frozen=True)
class ModelSpec:
    """Fully connected network ``layer_sizes[0] -> ... -> layer_sizes[-1]``.

    ``activation`` applies to hidden layers only; the output layer is linear and
    feeds ``loss``.
    """

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        problems = []
        if len(sizes) < 2:
            problems.append("layer_sizes needs at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            problems.append("layer_sizes must be positive integers")
        if self.activation not in ACTIVATIONS:
            problems.append(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.loss not in LOSSES:
            problems.append(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def dim(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def init(self, seed: int) -> np.ndarray:
        # U[-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases, layer by layer.
        rng = np.random.default_rng(seed)
        chunks = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(rng.uniform(-bound, bound, size=fan_out))
        return np.concatenate(chunks)

    def unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split ``w`` into per-layer ``(W, b)`` views (no copies)."""
        _check_dim(w, self.dim)
        layers = []
        pos = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = w[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = w[pos:pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers

    def _activate(self, z):
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "tanh":
            return np.tanh(z)
        return z

    def _activate_grad(self, z, h):
        if self.activation == "relu":
            return (z > 0.0).astype(z.dtype)
        if self.activation == "tanh":
            return 1.0 - h * h
        return np.ones_like(z)

    def _forward(self, w, X):
        X = _check_features(X, self.layer_sizes[0])
        layers = self.unpack(w)
        pre, post = [], [X]
        h = X
        for i, (W, b) in enumerate(layers):
            z = h @ W + b
            h = z if i == len(layers) - 1 else self._activate(z)
            pre.append(z)
            post.append(h)
        return layers, pre, post

    def _output_loss(self, out, y):
        n = out.shape[0]
        if self.loss == "softmax_cross_entropy":
            shifted = out - out.max(axis=1, keepdims=True)
            lse = np.log(np.exp(shifted).sum(axis=1))
            loss = float(np.mean(lse - shifted[np.arange(n), y]))
            delta = np.exp(shifted - lse[:, None])
            delta[np.arange(n), y] -= 1.0
        else:
            target = np.zeros_like(out)
            target[np.arange(n), y] = 1.0
            delta = out - target
            loss = float(0.5 * np.mean(np.sum(delta * delta, axis=1)))
        return loss, delta / n

    def scores(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Output-layer values (logits for cross-entropy)."""
        return self._forward(w, X)[2][-1]

    def loss_and_scores(self, w, X, y) -> tuple[float, np.ndarray]:
        out = self.scores(w, X)
        if out.shape[0] == 0:
            raise ShapeError("empty batch")
        return self._output_loss(out, np.asarray(y))[0], out

    def loss_and_gradient(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        layers, pre, post = self._forward(w, X)
        if post[0].shape[0] == 0:
            raise ShapeError("empty batch")
        loss, delta = self._output_loss(post[-1], np.asarray(y))

        grads = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            grads.append(delta.sum(axis=0))
            grads.append((post[i].T @ delta).ravel())
            if i > 0:
                delta = (delta @ W.T) * self._activate_grad(pre[i - 1], post[i])
        return loss, np.concatenate(grads[::-1])


@dataclass(frozen=True)
class QuadraticSpec:
    """Per-sample loss ``0.5 * ||w - x||^2``; the batch loss is its mean.

    With all-zero features this is exactly ``f(w) = 0.5 * ||w||^2``, whose
    gradient is ``w``. Useful as an analytically tractable model for the
    simulator. It has no classifier head, so accuracy is reported as NaN.
    """

    dim: int

    def __post_init__(self):
        if int(self.dim) <= 0:
            raise ConfigError("quadratic model dim must be positive")

    n_outputs = 0

    def init(self, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).uniform(-1.0, 1.0, size=self.dim)

    def loss_and_gradient(self, w, X, y=None):
        _check_dim(w, self.dim)
        X = _check_features(X, self.dim)
        if X.shape[0] == 0:
            raise ShapeError("empty batch")
        diff = w[None, :] - X
        loss = float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
        return loss, diff.mean(axis=0)

    def scores(self, w, X):
        return None

    def loss_and_scores(self, w, X, y=None):
        return self.loss_and_gradient(w, X, y)[0], None


def _check_dim(w: np.ndarray, dim: int) -> None:
    if w.ndim != 1 or w.shape[0] != dim:
        raise ShapeError(f"parameter vector has shape {w.shape}, model expects ({dim},)")


def _check_features(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"features have shape {X.shape}, model expects (n, {n_features})")
    return X


def init_model(spec, seed: int) -> np.ndarray:
    """Deterministic initial parameters for ``spec``."""
    return spec.init(seed)


def loss_and_gradient(w: np.ndarray, spec, batch: Dataset) -> tuple[float, np.ndarray]:
    """Mean loss over ``batch`` and its gradient with respect to ``w``."""
    return spec.loss_and_gradient(w, batch.features, batch.labels)


def local_train(
    w0: np.ndarray,
    spec,
    k: int,
    eta_l: float,
    data: Dataset,
    batch_size: int | None,
    rng,
    momentum: float = 0.0,
    prox: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Run ``k`` local SGD steps from ``w0`` and return ``(w0 - w_k, last_loss)``.

    The returned vector is the accumulated update over all steps, not the last
    minibatch gradient. Minibatches are drawn with replacement from ``data``
    using ``rng`` (a ``numpy.random.Generator`` or a seed); ``batch_size=None``
    uses the full local dataset at every step. ``momentum`` keeps a heavy-ball
    buffer that starts at zero on every call. ``prox`` adds
    ``prox/2 * ||w - w0||^2`` to the local objective.

    ``last_loss`` is the minibatch loss seen by the final step, or the full-data
    loss at ``w0`` when ``k == 0``.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if eta_l <= 0:
        raise ValueError(f"eta_l must be > 0, got {eta_l}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = len(data)
    X, y = data.features, data.labels
    w = np.array(w0, dtype=np.float64, copy=True)
    if k == 0:
        loss, _ = spec.loss_and_gradient(w, X, y)
        return np.zeros_like(w), loss

    velocity = np.zeros_like(w) if momentum else None
    loss = 0.0
    for _ in range(k):
        if batch_size:
            idx = rng.integers(0, n, size=batch_size)
            loss, grad = spec.loss_and_gradient(w, X[idx], y[idx])
        else:
            loss, grad = spec.loss_and_gradient(w, X, y)
        if prox:
            grad = grad + prox * (w - w0)
        if velocity is not None:
            velocity = momentum * velocity + grad
            grad = velocity
        w -= eta_l * grad
    return w0 - w, loss


def predict(w: np.ndarray, spec, X: np.ndarray) -> np.ndarray:
    """Class predictions; ties go to the lowest class index."""
    scores = spec.scores(w, X)
    if scores is None:
        raise ShapeError("model has no classifier head")
    return np.argmax(scores, axis=1)


def evaluate(w: np.ndarray, spec, test: Dataset) -> tuple[float, float]:
    """Return ``(accuracy, mean loss)`` of ``w`` on ``test``.

    Accuracy is ``correct / total`` exactly, NaN for models without a
    classifier head.
    """
    if len(test) == 0:
        raise ShapeError("empty test set")
    loss, scores = spec.loss_and_scores(w, test.features, test.labels)
    if scores is None:
        return float("nan"), loss
    correct = int(np.count_nonzero(np.argmax(scores, axis=1) == test.labels))
    return correct / len(test), loss
