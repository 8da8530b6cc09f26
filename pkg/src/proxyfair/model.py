"""Linear base classifier: L2-regularised logistic regression."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, DivergenceError


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    threshold: float = 0.0
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ContractError("weights must be a vector")
        if not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ContractError("model parameters must be finite")
        if self.feature_names and len(self.feature_names) != w.size:
            raise ContractError("feature_names length does not match weights")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    def to_json(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "threshold": self.threshold,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_json(cls, obj) -> "LinearModel":
        return cls(
            np.array(obj["weights"], dtype=float),
            obj["bias"],
            obj.get("threshold", 0.0),
            tuple(obj.get("feature_names", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


@dataclass(frozen=True)
class TrainConfig:
    l2_strength: float = 1e-4
    learning_rate: float = 0.1
    epochs: int = 40
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self):
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def to_json(self) -> dict:
        return asdict(self)


def score(model: LinearModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.weights.size:
        raise ContractError(f"feature shape {X.shape} does not match model dimension {model.weights.size}")
    return X @ model.weights + model.bias


def predict(scores, threshold: float = 0.0) -> np.ndarray:
    """1 where ``score > threshold`` (strict), else 0."""
    return (np.asarray(scores, dtype=float) > threshold).astype(np.int8)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_objective(w, b, X, y, l2):
    """Mean logistic loss plus ``l2/2 * |w|^2`` (bias unpenalised)."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_gradient(w, b, X, y, l2):
    r = sigmoid(X @ w + b) - y
    n = X.shape[0]
    return X.T @ r / n + l2 * w, float(r.sum() / n)


# extra(w, b) -> (grad_w, grad_b), a full-data term added at every step
ExtraGradient = Callable[[np.ndarray, float], tuple]


@dataclass
class TrainHistory:
    objective: list = field(default_factory=list)


def gradient_descent(
    X,
    y,
    config: TrainConfig,
    init: tuple | None = None,
    extra: ExtraGradient | None = None,
    epochs: int | None = None,
    rng: np.random.Generator | None = None,
    history: TrainHistory | None = None,
):
    """Seeded mini-batch gradient descent on the regularised logistic objective.

    Returns ``(w, b)``. ``history.objective`` receives the full-data objective
    (excluding ``extra``) after every epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if init is None:
        w, b = np.zeros(d), 0.0
    else:
        w, b = np.array(init[0], dtype=float), float(init[1])
    rng = np.random.default_rng(config.seed) if rng is None else rng
    bs = min(config.batch_size, n)
    lr = config.learning_rate
    for epoch in range(epochs if epochs is not None else config.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            gw, gb = logistic_gradient(w, b, X[idx], y[idx], config.l2_strength)
            if extra is not None:
                ew, eb = extra(w, b)
                gw = gw + ew
                gb = gb + eb
            w = w - lr * gw
            b = b - lr * gb
        obj = logistic_objective(w, b, X, y, config.l2_strength)
        if history is not None:
            history.objective.append(obj)
        if not (np.isfinite(obj) and np.isfinite(w).all() and np.isfinite(b)):
            raise DivergenceError(f"non-finite objective at epoch {epoch}", epoch=epoch)
    return w, b


def train_base(features, labels, config: TrainConfig = TrainConfig(), feature_names=(), history=None) -> LinearModel:
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ContractError(f"features {X.shape} and labels {y.shape} disagree")
    if not (y == 1).any() or not (y == 0).any():
        raise ContractError("training requires both label classes")
    w, b = gradient_descent(X, y, config, history=history)
    return LinearModel(w, b, 0.0, tuple(feature_names))


def accuracy(preds, labels) -> float:
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))
