"""Random forest of best-first trees on bootstrap samples."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParams, UntrainedModel
from .tree import ClassWeights, DecisionTree


def tree_seed(seed: int, index: int) -> int:
    """Seed for tree ``index``; independent of training order or threads."""
    return int(np.random.default_rng([seed, index]).integers(2 ** 63))


class RandomForest:
    def __init__(self, n_estimators: int = 100, criterion: str = "entropy",
                 max_depth: int | None = None, max_leaf_nodes: int | None = None,
                 class_weights=None, max_features: int | str | None = "sqrt",
                 bootstrap: bool = True, seed: int = 0):
        if n_estimators < 1:
            raise InvalidParams("n_estimators must be >= 1")
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.max_leaf_nodes = max_leaf_nodes
        self.class_weights = ClassWeights.parse(class_weights)
        self.max_features = max_features
        # bootstrap=False with max_features=None reduces to a single tree
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[DecisionTree] = []

    def _fit_one(self, X, y, i: int) -> DecisionTree:
        s = tree_seed(self.seed, i)
        t = DecisionTree(self.criterion, self.max_depth, self.max_leaf_nodes,
                         self.class_weights, self.max_features, seed=s)
        if not self.bootstrap:
            return t.fit(X, y)
        rng = np.random.default_rng(s)
        counts = np.bincount(rng.integers(0, len(X), len(X)), minlength=len(X))
        # bootstrap multiplicities act as sample weights
        return t.fit(X, y, sample_weight=counts.astype(np.float64))

    def fit(self, X, y, jobs: int = 1) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(jobs) as ex:
                self.trees = list(ex.map(lambda i: self._fit_one(X, y, i), range(self.n_estimators)))
        else:
            self.trees = [self._fit_one(X, y, i) for i in range(self.n_estimators)]
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not self.trees:
            raise UntrainedModel("forest is not fitted")
        X = np.asarray(X, dtype=np.float64)
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"n_estimators": self.n_estimators, "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        f = cls(n_estimators=d["n_estimators"], seed=d.get("seed", 0))
        f.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return f
