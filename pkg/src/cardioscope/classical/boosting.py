"""Gradient boosting for binary logistic loss with Newton leaf values."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateData, InvalidParams, UntrainedModel
from .tree import DecisionTree


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, p, eps: float = 1e-15) -> float:
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


class GradientBoosting:
    """F0 = log-odds of the base rate; each stage fits a squared-error tree
    to the residuals y - sigmoid(F) and replaces its leaf outputs with the
    Newton step sum(r) / sum(p(1-p)) over the leaf's members."""

    def __init__(self, n_estimators: int = 100, max_depth: int = 3,
                 learning_rate: float = 0.1, seed: int = 0):
        if n_estimators < 0 or learning_rate < 0:
            raise InvalidParams("n_estimators and learning_rate must be >= 0")
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.seed = seed
        self.f0: float | None = None
        self.trees: list[DecisionTree] = []
        self.train_loss: list[float] = []

    def fit(self, X, y) -> "GradientBoosting":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(X) == 0 or not np.all((y == 0) | (y == 1)):
            raise DegenerateData("binary 0/1 targets required")
        p0 = y.mean()
        if p0 in (0.0, 1.0):
            raise DegenerateData("both classes must be present")
        self.f0 = float(np.log(p0 / (1 - p0)))
        F = np.full(len(y), self.f0)
        self.trees = []
        self.train_loss = [log_loss(y, _sigmoid(F))]
        for _ in range(self.n_estimators):
            p = _sigmoid(F)
            r = y - p
            t = DecisionTree("squared_error", max_depth=self.max_depth).fit(X, r)
            leaf = t.apply(X)
            h = p * (1 - p)
            num = np.bincount(leaf, weights=r, minlength=len(t._nodes))
            den = np.bincount(leaf, weights=h, minlength=len(t._nodes))
            values = {}
            for i in np.unique(leaf):
                # a leaf of saturated probabilities gets no update
                values[int(i)] = float(num[i] / den[i]) if den[i] > 1e-12 else 0.0
            t.set_leaf_values(values)
            F = F + self.learning_rate * t.predict_value(X)
            self.trees.append(t)
            self.train_loss.append(log_loss(y, _sigmoid(F)))
        return self

    def decision_function(self, X, n_stages: int | None = None) -> np.ndarray:
        if self.f0 is None:
            raise UntrainedModel("boosting model is not fitted")
        X = np.asarray(X, dtype=np.float64)
        F = np.full(len(X), self.f0)
        for t in self.trees[:n_stages]:
            F = F + self.learning_rate * t.predict_value(X)
        return F

    def predict_proba(self, X, n_stages: int | None = None) -> np.ndarray:
        return _sigmoid(self.decision_function(X, n_stages))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "f0": self.f0,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoosting":
        g = cls(d["n_estimators"], d["max_depth"], d["learning_rate"])
        g.f0 = d["f0"]
        g.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return g
