"""Best-first decision trees (classification by weighted entropy/gini,
regression by squared error).

Candidate thresholds are midpoints between consecutive distinct values;
exact gain ties go to the lower feature index, then the lower threshold.
Samples with ``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import AllZero, DegenerateData, InvalidParams, UntrainedModel


def entropy(weighted_counts) -> float:
    """Shannon entropy in bits of the class proportions."""
    c = np.asarray(weighted_counts, dtype=np.float64)
    if np.any(c < 0):
        raise InvalidParams("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise AllZero("all counts are zero")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


def _binary_gini(p: np.ndarray) -> np.ndarray:
    return 2.0 * p * (1.0 - p)


@dataclass
class ClassWeights:
    abnormal: float = 1.0
    normal: float = 1.0

    def __post_init__(self):
        if self.abnormal <= 0 or self.normal <= 0:
            raise InvalidParams("class weights must be positive")

    @classmethod
    def parse(cls, value) -> "ClassWeights":
        """Accept ``None``, ``"a:n"`` (abnormal:normal), a pair, a mapping or an instance."""
        if value is None:
            return cls()
        if isinstance(value, ClassWeights):
            return value
        if isinstance(value, str):
            a, n = value.split(":")
            return cls(float(a), float(n))
        if isinstance(value, dict):
            return cls(float(value["abnormal"]), float(value["normal"]))
        a, n = value
        return cls(float(a), float(n))

    def per_sample(self, y: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.abnormal, self.normal).astype(np.float64)

    def to_str(self) -> str:
        return f"{self.abnormal:g}:{self.normal:g}"


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: np.ndarray = field(default_factory=lambda: np.zeros(1))
    weighted_samples: float = 0.0
    depth: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        d = {"value": np.asarray(self.value).tolist(), "weighted_samples": self.weighted_samples}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict, depth: int = 0) -> "TreeNode":
        node = cls(value=np.asarray(d["value"], dtype=np.float64),
                   weighted_samples=d.get("weighted_samples", 0.0), depth=depth)
        if "left" in d:
            node.feature, node.threshold = int(d["feature"]), float(d["threshold"])
            node.left = cls.from_dict(d["left"], depth + 1)
            node.right = cls.from_dict(d["right"], depth + 1)
        return node


@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float


def best_split(X: np.ndarray, idx: np.ndarray, w: np.ndarray, t: np.ndarray,
               features: np.ndarray, criterion: str) -> _Split | None:
    """Best (feature, threshold) for the samples ``idx``.

    ``t`` is the class-1 indicator for classification criteria and the
    regression target for ``squared_error``. Gain is the weighted impurity
    decrease ``W*I(node) - W_L*I(L) - W_R*I(R)``.
    """
    if idx.size < 2:
        return None
    Xn = X[np.ix_(idx, features)]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    wn = w[idx][order]
    tn = (w[idx] * t[idx])[order]
    cw = np.cumsum(wn, axis=0)[:-1]
    ct = np.cumsum(tn, axis=0)[:-1]
    W = wn.sum(axis=0)[0]
    T = tn.sum(axis=0)[0]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    wl, wr = cw, W - cw
    tl, tr = ct, T - ct
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "squared_error":
            gain = tl * tl / wl + tr * tr / wr - T * T / W
        else:
            imp = _binary_entropy if criterion == "entropy" else _binary_gini
            gain = W * imp(np.clip(T / W, 0, 1)) - wl * imp(np.clip(tl / wl, 0, 1)) \
                - wr * imp(np.clip(tr / wr, 0, 1))
    valid &= (wl > 0) & (wr > 0)
    gain = np.where(valid, gain, -np.inf)
    # feature-major flattening: argmax's first hit is (lowest feature, lowest threshold)
    flat = gain.T.reshape(-1)
    k = int(np.argmax(flat))
    if not np.isfinite(flat[k]):
        return None
    f_local, pos = divmod(k, gain.shape[0])
    thr = 0.5 * (xs[pos, f_local] + xs[pos + 1, f_local])
    if not thr < xs[pos + 1, f_local]:  # midpoint rounded up onto the next value
        thr = xs[pos, f_local]
    return _Split(max(float(flat[k]), 0.0), int(features[f_local]), float(thr))


class DecisionTree:
    """Best-first tree: the frontier leaf with the largest gain is split next
    until ``max_leaf_nodes`` leaves exist or no leaf can be split."""

    def __init__(self, criterion: str = "entropy", max_depth: int | None = None,
                 max_leaf_nodes: int | None = None, class_weights=None,
                 max_features: int | str | None = None, seed: int = 0):
        if criterion not in ("entropy", "gini", "squared_error"):
            raise InvalidParams(f"unknown criterion {criterion!r}")
        if max_leaf_nodes is not None and max_leaf_nodes < 1:
            raise InvalidParams("max_leaf_nodes must be >= 1")
        self.criterion = criterion
        self.max_depth = max_depth
        self.max_leaf_nodes = max_leaf_nodes
        self.class_weights = ClassWeights.parse(class_weights)
        self.max_features = max_features
        self.seed = seed
        self.root: TreeNode | None = None
        self.n_features: int | None = None

    @property
    def is_regressor(self) -> bool:
        return self.criterion == "squared_error"

    def _n_split_features(self, d: int) -> int:
        mf = self.max_features
        if mf is None:
            return d
        if mf == "sqrt":
            return max(1, int(np.sqrt(d)))
        return max(1, min(d, int(mf)))

    def fit(self, X, y, sample_weight=None) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
            raise DegenerateData("X must be a non-empty 2-d array with one target per row")
        n, d = X.shape
        self.n_features = d
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        if not self.is_regressor:
            if not np.all((y == 0) | (y == 1)):
                raise DegenerateData("classification targets must be 0/1")
            w = w * self.class_weights.per_sample(y)
        rng = np.random.default_rng(self.seed)
        m = self._n_split_features(d)

        def leaf_value(idx):
            W = w[idx].sum()
            if self.is_regressor:
                return np.array([np.dot(w[idx], y[idx]) / W])
            p1 = np.dot(w[idx], y[idx]) / W
            return np.array([1.0 - p1, p1])

        def pure(idx):
            v = y[idx]
            return np.all(v == v[0])

        def candidate(node, idx):
            if self.max_depth is not None and node.depth >= self.max_depth:
                return None
            if idx.size < 2 or pure(idx):
                return None
            feats = np.arange(d) if m == d else np.sort(rng.choice(d, m, replace=False))
            return best_split(X, idx, w, y, feats, self.criterion)

        keep = np.flatnonzero(w > 0)
        if keep.size == 0:
            raise DegenerateData("all sample weights are zero")
        self.root = TreeNode(value=leaf_value(keep), weighted_samples=float(w[keep].sum()))
        counter = itertools.count()
        heap = []

        def push(node, idx):
            s = candidate(node, idx)
            if s is not None:
                heapq.heappush(heap, (-s.gain, next(counter), node, idx, s))

        push(self.root, keep)
        leaves = 1
        while heap and (self.max_leaf_nodes is None or leaves < self.max_leaf_nodes):
            _, _, node, idx, s = heapq.heappop(heap)
            go_left = X[idx, s.feature] <= s.threshold
            li, ri = idx[go_left], idx[~go_left]
            node.feature, node.threshold = s.feature, s.threshold
            node.left = TreeNode(value=leaf_value(li), weighted_samples=float(w[li].sum()), depth=node.depth + 1)
            node.right = TreeNode(value=leaf_value(ri), weighted_samples=float(w[ri].sum()), depth=node.depth + 1)
            leaves += 1
            push(node.left, li)
            push(node.right, ri)
        self._compile()
        return self

    # flat arrays make batch prediction a few vectorised passes
    def _compile(self):
        feats, thrs, lefts, rights, values = [], [], [], [], []
        stack = [self.root]
        index = {}
        order = []
        while stack:
            n = stack.pop()
            index[id(n)] = len(order)
            order.append(n)
            if not n.is_leaf:
                stack.append(n.right)
                stack.append(n.left)
        for n in order:
            feats.append(n.feature)
            thrs.append(n.threshold)
            lefts.append(index[id(n.left)] if not n.is_leaf else -1)
            rights.append(index[id(n.right)] if not n.is_leaf else -1)
            values.append(n.value)
        self._feat = np.array(feats)
        self._thr = np.array(thrs)
        self._left = np.array(lefts)
        self._right = np.array(rights)
        self._value = np.array(values)
        self._nodes = order

    def apply(self, X) -> np.ndarray:
        """Index (into the compiled node list) of the leaf each row lands in."""
        if self.root is None:
            raise UntrainedModel("tree is not fitted")
        X = np.asarray(X, dtype=np.float64)
        cur = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = self._left[cur] >= 0
            if not internal.any():
                return cur
            rows = np.flatnonzero(internal)
            c = cur[rows]
            go_left = X[rows, self._feat[c]] <= self._thr[c]
            cur[rows] = np.where(go_left, self._left[c], self._right[c])

    def leaf_nodes(self) -> list[TreeNode]:
        return [n for n in self._nodes if n.is_leaf]

    def set_leaf_values(self, values: dict[int, float]) -> None:
        """Overwrite leaf outputs by compiled index (used by boosting)."""
        for i, v in values.items():
            self._nodes[i].value = np.array([v])
            self._value[i] = v

    def predict_value(self, X) -> np.ndarray:
        return self._value[self.apply(X), 0]

    def predict_proba(self, X) -> np.ndarray:
        """Class-1 probability."""
        if self.is_regressor:
            raise InvalidParams("regression tree has no class probabilities")
        return self._value[self.apply(X), 1]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self._left < 0))

    @property
    def depth(self) -> int:
        return max(n.depth for n in self._nodes)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "max_depth": self.max_depth,
                "max_leaf_nodes": self.max_leaf_nodes,
                "class_weights": self.class_weights.to_str(), "n_features": self.n_features,
                "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        t = cls(d["criterion"], d.get("max_depth"), d.get("max_leaf_nodes"), d.get("class_weights"))
        t.n_features = d.get("n_features")
        t.root = TreeNode.from_dict(d["root"])
        t._compile()
        return t
