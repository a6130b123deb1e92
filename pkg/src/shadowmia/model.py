"""Feed-forward softmax classifier trained with plain mini-batch SGD.

The same code serves as victim and shadow: a shadow is the victim's
parameters trained further on attacker-held data (:func:`fine_tune`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import Dataset, make_rng
from .errors import ConfigError, DataError, TrainingError

PARAMS_FORMAT = "shadowmia.model-params/v1"

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_sizes: tuple = ()
    class_count: int = 5
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.class_count < 1:
            raise ConfigError("input_dim and class_count must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be >= 1, got {self.hidden_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim, *self.hidden_sizes, self.class_count)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "class_count": self.class_count,
            "activation": self.activation,
        }


@dataclass(eq=False)
class ModelParams:
    """Per-layer weight matrices (fan_out x fan_in) and bias vectors."""

    architecture: Architecture
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ConfigError("layer count does not match architecture")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ConfigError(
                    f"layer {i}: expected W {(sizes[i + 1], sizes[i])} and b {(sizes[i + 1],)}, "
                    f"got {W.shape} and {b.shape}"
                )

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.architecture,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
        )

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.architecture == other.architecture
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.weights, *self.biases))

    def flat(self) -> np.ndarray:
        """All entries, weights layer by layer then biases, as one vector."""
        return np.concatenate([W.ravel() for W in self.weights] + [b for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "format": PARAMS_FORMAT,
            "architecture": self.architecture.to_dict(),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        if doc.get("format") != PARAMS_FORMAT:
            raise ConfigError(f"unsupported params format {doc.get('format')!r}")
        arch = Architecture(**doc["architecture"])
        sizes = arch.layer_sizes
        weights = [
            np.array(W, dtype=np.float64).reshape(sizes[i + 1], sizes[i])
            for i, W in enumerate(doc["weights"])
        ]
        biases = [np.array(b, dtype=np.float64).reshape(-1) for b in doc["biases"]]
        return cls(arch, weights, biases)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 80
    batch_size: int = 32
    l2_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            # lr == 0 is only reachable through fine_tune's identity check
            if self.learning_rate != 0:
                raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.max_epochs) < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.l2_penalty >= 0:
            raise ConfigError(f"l2_penalty must be >= 0, got {self.l2_penalty}")


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    holdout_accuracy: Optional[list] = None

    def __len__(self):
        return len(self.loss)

    def to_dict(self) -> dict:
        return {
            "loss": list(self.loss),
            "train_accuracy": list(self.train_accuracy),
            "holdout_accuracy": None if self.holdout_accuracy is None else list(self.holdout_accuracy),
        }


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = make_rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(arch, weights, biases)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


def _forward(params: ModelParams, X: np.ndarray):
    """Return pre-activations, activations and the final logits."""
    kind = params.architecture.activation
    zs, acts = [], [X]
    a = X
    n_layers = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        if i == n_layers - 1:
            return zs, acts, z
        a = _activate(z, kind)
        zs.append(z)
        acts.append(a)
    raise AssertionError("unreachable")


def _check_features(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.ndim != 2 or X2.shape[1] != params.architecture.input_dim:
        raise DataError(
            f"feature length {X2.shape[-1]} does not match input_dim {params.architecture.input_dim}"
        )
    return X2, single


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_posterior(params: ModelParams, features) -> np.ndarray:
    """Softmax posterior for one feature vector, or for each row of a 2-D array."""
    X, single = _check_features(params, features)
    with np.errstate(over="ignore", invalid="ignore"):
        _, _, logits = _forward(params, X)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite logits in forward pass")
    P = softmax(logits)
    return P[0] if single else P


def loss_and_gradient(params: ModelParams, X, y, l2_penalty: float = 0.0):
    """Mean cross-entropy plus ``l2_penalty/2 * sum ||W||^2`` and its exact gradient.

    Biases are not penalised. The gradient is returned as a :class:`ModelParams`
    with the same shapes as ``params``.
    """
    X, _ = _check_features(params, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    n = X.shape[0]
    if n == 0:
        raise DataError("loss_and_gradient needs a nonempty batch")
    if y.shape[0] != n:
        raise DataError("features and labels disagree in length")
    kind = params.architecture.activation
    with np.errstate(over="ignore", invalid="ignore"):
        zs, acts, logits = _forward(params, X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        log_p = shifted - log_norm[:, None]
    rows = np.arange(n)
    loss = -log_p[rows, y].mean()
    if l2_penalty:
        loss += 0.5 * l2_penalty * sum(float(np.sum(W * W)) for W in params.weights)

    delta = np.exp(log_p)
    delta[rows, y] -= 1.0
    delta /= n
    n_layers = len(params.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if l2_penalty:
            gW[i] = gW[i] + l2_penalty * params.weights[i]
        if i > 0:
            delta = (delta @ params.weights[i]) * _activate_grad(zs[i - 1], acts[i], kind)
    return float(loss), ModelParams(params.architecture, gW, gb)


def evaluate_accuracy(params: ModelParams, data: Dataset) -> float:
    """Fraction of argmax hits; ties go to the smallest class index."""
    if len(data) == 0:
        raise DataError("cannot evaluate accuracy on an empty dataset")
    pred = np.argmax(forward_posterior(params, data.features), axis=1)
    return float(np.mean(pred == data.labels))


def train(
    arch: Architecture,
    init: ModelParams,
    data: Dataset,
    config: TrainConfig,
    holdout: Optional[Dataset] = None,
):
    """Mini-batch SGD for exactly ``config.max_epochs`` epochs.

    The sample order is reshuffled every epoch from a generator seeded with
    ``config.seed``. Returns ``(params, history)``; ``init`` is not modified.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    if init.architecture != arch:
        raise ConfigError("initial parameters do not match the architecture")
    if data.feature_dim != arch.input_dim:
        raise DataError(f"data has {data.feature_dim} features, architecture expects {arch.input_dim}")
    if data.class_count > arch.class_count:
        raise DataError(f"data declares {data.class_count} classes, model has {arch.class_count}")

    params = init.copy()
    history = TrainHistory(holdout_accuracy=[] if holdout is not None else None)
    rng = make_rng(config.seed)
    X, y = data.features, data.labels
    n = len(data)
    bs = int(config.batch_size)
    lr = config.learning_rate
    for epoch in range(int(config.max_epochs)):
        order = rng.permutation(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            loss, grad = loss_and_gradient(params, X[idx], y[idx], config.l2_penalty)
            if not math.isfinite(loss) or not grad.is_finite():
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {batch_no + 1}")
            for W, gWi in zip(params.weights, grad.weights):
                W -= lr * gWi
            for b, gbi in zip(params.biases, grad.biases):
                b -= lr * gbi
            total += loss * len(idx)
        history.loss.append(total / n)
        history.train_accuracy.append(evaluate_accuracy(params, data))
        if holdout is not None:
            history.holdout_accuracy.append(evaluate_accuracy(params, holdout))
    return params, history


def fine_tune(victim_params: ModelParams, shadow_data: Dataset, config: TrainConfig) -> ModelParams:
    """Continue training from the victim's parameters on the attacker's data."""
    params, _ = train(victim_params.architecture, victim_params, shadow_data, config)
    return params
