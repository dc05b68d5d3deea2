"""Concept activation vectors and TCAV scores, the non-causal baseline.

Rule classifiers are step functions with no useful gradient, so they are
explained through a smooth surrogate: features pass through a per-slot
affine embedding (the "activation") and a logistic head fit to the
classifier's decisions supplies the class logits.
"""

from __future__ import annotations

import abc
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from conceptcause.errors import QueryError
from conceptcause.world import BlackBoxClassifier, Dataset

FD_STEP = 1e-5


class DifferentiableScorer(abc.ABC):
    """Split of a model into ``activation(x)`` and a head ``logit(a, cls)``."""

    @abc.abstractmethod
    def activation(self, x: Sequence[float]) -> np.ndarray: ...

    @abc.abstractmethod
    def logit(self, a: np.ndarray, cls: int) -> float: ...

    def gradient(self, a: np.ndarray, cls: int) -> np.ndarray:
        """Central finite differences; subclasses may override analytically."""
        return finite_difference_gradient(self, a, cls)


def finite_difference_gradient(scorer: DifferentiableScorer, a: np.ndarray, cls: int,
                               step: float = FD_STEP) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    grad = np.empty_like(a)
    for i in range(a.size):
        e = np.zeros_like(a)
        e[i] = step
        grad[i] = (scorer.logit(a + e, cls) - scorer.logit(a - e, cls)) / (2 * step)
    return grad


class LinearScorer(DifferentiableScorer):
    """``a = scale * x + shift`` and ``logit = weights[cls] . a + bias[cls]``."""

    def __init__(self, weights, bias=None, scale=1.0, shift=0.0):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=float))
        n_cls, dim = self.weights.shape
        self.bias = np.zeros(n_cls) if bias is None else np.asarray(bias, dtype=float)
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,)).copy()
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (dim,)).copy()

    def activation(self, x):
        return self.scale * np.asarray(x, dtype=float) + self.shift

    def logit(self, a, cls):
        return float(self.weights[cls] @ np.asarray(a, dtype=float) + self.bias[cls])

    def gradient(self, a, cls):
        return self.weights[cls].copy()


def _fit_logistic(X: np.ndarray, y: np.ndarray, l2: float, lr: float,
                  iterations: int) -> tuple[np.ndarray, float]:
    w = np.zeros(X.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iterations):
        z = np.clip(X @ w + b, -30, 30)
        err = 1.0 / (1.0 + np.exp(-z)) - y
        w -= lr * (X.T @ err / n + l2 * w)
        b -= lr * err.mean()
    return w, b


def fit_surrogate(xs: Sequence[Sequence[int]], classifier: BlackBoxClassifier,
                  l2: float = 1e-3, lr: float = 0.5, iterations: int = 2000) -> LinearScorer:
    """Standardizing embedding plus a logistic head mimicking a binary classifier."""
    X = np.asarray(xs, dtype=float)
    y = np.asarray([classifier.classify(tuple(int(v) for v in x)) for x in X], dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    A = (X - mean) / std
    w, b = _fit_logistic(A, y, l2, lr, iterations)
    return LinearScorer(np.vstack([-w, w]), np.array([-b, b]), 1.0 / std, -mean / std)


@dataclass(frozen=True, eq=False)
class ConceptDirection:
    concept: str
    vector: np.ndarray
    accuracy: float

    def flipped(self) -> ConceptDirection:
        return ConceptDirection(self.concept, -self.vector, self.accuracy)


def train_probe(activations, labels, concept: str = "", l2: float = 1e-3, lr: float = 0.5,
                iterations: int = 500, seed: int = 0, holdout: float = 0.3) -> ConceptDirection:
    """Logistic-regression probe; its coefficient vector is the concept direction.

    Accuracy is measured on a seeded ``holdout`` fraction kept out of training.
    """
    X = np.asarray(activations, dtype=float)
    y = np.asarray(labels, dtype=float)
    if min(np.sum(y == 1), np.sum(y == 0)) < 2:
        raise QueryError("probe needs at least two examples of each class")
    perm = np.random.default_rng(seed).permutation(len(y))
    n_test = max(1, int(round(holdout * len(y)))) if holdout > 0 else 0
    test, train = perm[:n_test], perm[n_test:]
    if len(np.unique(y[train])) < 2:
        raise QueryError("training split holds a single class")
    w, b = _fit_logistic(X[train], y[train], l2, lr, iterations)
    if not np.any(w):
        raise QueryError("probe direction is zero")
    eval_idx = test if n_test else train
    acc = float(np.mean(((X[eval_idx] @ w + b) > 0) == (y[eval_idx] == 1)))
    return ConceptDirection(concept, w, acc)


def sensitivity(scorer: DifferentiableScorer, x, cls: int, direction: ConceptDirection | np.ndarray) -> float:
    """Directional derivative of the class logit along the concept direction."""
    v = direction.vector if isinstance(direction, ConceptDirection) else np.asarray(direction, dtype=float)
    return float(scorer.gradient(scorer.activation(x), cls) @ v)


def tcav_score(scorer: DifferentiableScorer, cls: int, direction: ConceptDirection | np.ndarray,
               background: Dataset | Sequence[Sequence[float]], flip: bool = False) -> float:
    """Fraction of background inputs with strictly positive sensitivity.

    ``flip`` scores the opposite direction, i.e. removing the concept.
    """
    xs = [inst.x for inst in background] if isinstance(background, Dataset) else list(background)
    if not xs:
        raise QueryError("background set is empty")
    v = direction.vector if isinstance(direction, ConceptDirection) else np.asarray(direction, dtype=float)
    if flip:
        v = -v
    positive = sum(1 for x in xs if sensitivity(scorer, x, cls, v) > 0.0)
    return positive / len(xs)
