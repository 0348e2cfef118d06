"""One-class SVM and isolation forest. Both score "higher = more anomalous"."""

from __future__ import annotations

import math

import numpy as np

from .classical.svm import rbf_kernel, smo_solve
from .errors import InvalidParams, UntrainedModel

EULER_GAMMA = 0.5772156649


class OneClassSVM:
    """nu-one-class SVM: min 1/2 a^T K a with 0 <= a_i <= 1/(nu n), sum a = 1.

    Solved by SMO in the rescaled variables a' = nu n a (box [0, 1],
    sum nu n); alpha and rho are mapped back afterwards.
    """

    def __init__(self, nu: float = 0.1, gamma: float | str = "scale", tol: float = 1e-3,
                 max_iter: int = 100_000):
        if not 0 < nu <= 1:
            raise InvalidParams("nu must lie in (0, 1]")
        self.nu = nu
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.support_vectors: np.ndarray | None = None
        self.alpha: np.ndarray | None = None
        self.rho: float | None = None
        self.gamma_: float | None = None
        self.objective: float | None = None

    def _gamma(self, X) -> float:
        if self.gamma == "scale":
            v = X.var()
            return 1.0 / (X.shape[1] * v) if v > 0 else 1.0
        g = float(self.gamma)
        if g <= 0:
            raise InvalidParams("gamma must be positive")
        return g

    def fit(self, X) -> "OneClassSVM":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) < 2:
            raise InvalidParams("need at least 2 training rows")
        n = len(X)
        self.gamma_ = self._gamma(X)
        K = rbf_kernel(X, X, self.gamma_)
        total = self.nu * n
        a0 = np.zeros(n)
        full = int(total)
        a0[:full] = 1.0
        if full < n:
            a0[full] = total - full
        res = smo_solve(K, np.zeros(n), np.ones(n), 1.0, a0, self.tol, self.max_iter)
        alpha = res.alpha / total
        keep = alpha > 0
        self.support_vectors = X[keep]
        self.alpha = alpha[keep]
        self.rho = res.rho / total
        self.objective = float(0.5 * alpha @ K @ alpha)
        self.n_train = n
        return self

    def score(self, X) -> np.ndarray:
        """rho - sum_i alpha_i k(x_i, x); positive means outside the support."""
        if self.alpha is None:
            raise UntrainedModel("one-class SVM is not fitted")
        X = np.asarray(X, dtype=np.float64)
        return self.rho - rbf_kernel(X, self.support_vectors, self.gamma_) @ self.alpha

    def to_dict(self) -> dict:
        return {"kind": "ocsvm", "nu": self.nu, "gamma": self.gamma_, "rho": self.rho,
                "alpha": self.alpha.tolist(), "support_vectors": self.support_vectors.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "OneClassSVM":
        m = cls(d["nu"], d["gamma"])
        m.gamma_, m.rho = d["gamma"], d["rho"]
        m.alpha = np.asarray(d["alpha"], dtype=np.float64)
        m.support_vectors = np.asarray(d["support_vectors"], dtype=np.float64)
        return m


def average_path_length(m) -> np.ndarray | float:
    """c(m): mean unsuccessful-search path length in a BST of m points."""
    m_arr = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m_arr)
    out = np.where(m_arr == 2, 1.0, out)
    big = m_arr > 2
    mb = np.where(big, m_arr, 3.0)
    out = np.where(big, 2.0 * (np.log(mb - 1) + EULER_GAMMA) - 2.0 * (mb - 1) / mb, out)
    return float(out) if np.ndim(m) == 0 else out


class _ITree:
    __slots__ = ("feature", "threshold", "left", "right", "size", "depth")

    def __init__(self, X: np.ndarray, rng: np.random.Generator, limit: int):
        feature, threshold, left, right, size, depth = [], [], [], [], [], []
        stack = [(np.arange(len(X)), 0, -1, False)]
        while stack:
            idx, d, parent, is_right = stack.pop()
            node = len(feature)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            size.append(len(idx))
            depth.append(d)
            if len(idx) <= 1 or d >= limit:
                continue
            sub = X[idx]
            lo, hi = sub.min(axis=0), sub.max(axis=0)
            varying = np.flatnonzero(hi > lo)
            if varying.size == 0:  # all duplicates
                continue
            f = int(varying[rng.integers(varying.size)])
            t = float(rng.uniform(lo[f], hi[f]))
            go_left = sub[:, f] < t
            feature[node], threshold[node] = f, t
            stack.append((idx[~go_left], d + 1, node, True))
            stack.append((idx[go_left], d + 1, node, False))
        self.feature = np.array(feature)
        self.threshold = np.array(threshold)
        self.left = np.array(left)
        self.right = np.array(right)
        self.size = np.array(size)
        self.depth = np.array(depth)

    def path_length(self, X: np.ndarray) -> np.ndarray:
        cur = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = self.feature[cur] >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            c = cur[rows]
            go_left = X[rows, self.feature[c]] < self.threshold[c]
            cur[rows] = np.where(go_left, self.left[c], self.right[c])
        return self.depth[cur] + average_path_length(self.size[cur])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


class IsolationForest:
    def __init__(self, n_trees: int = 100, psi: int = 256, seed: int = 0):
        if n_trees < 1 or psi < 2:
            raise InvalidParams("need n_trees >= 1 and psi >= 2")
        self.n_trees = n_trees
        self.psi = psi
        self.seed = seed
        self.trees: list[_ITree] = []
        self.psi_: int | None = None

    def fit(self, X) -> "IsolationForest":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) < 2:
            raise InvalidParams("need at least 2 training rows")
        self.psi_ = min(self.psi, len(X))
        limit = math.ceil(math.log2(self.psi_))
        self.trees = []
        for i in range(self.n_trees):
            rng = np.random.default_rng([self.seed, i])
            sub = X[rng.choice(len(X), self.psi_, replace=False)]
            self.trees.append(_ITree(sub, rng, limit))
        return self

    def mean_path_length(self, X) -> np.ndarray:
        if not self.trees:
            raise UntrainedModel("isolation forest is not fitted")
        X = np.asarray(X, dtype=np.float64)
        return np.mean([t.path_length(X) for t in self.trees], axis=0)

    def score(self, X) -> np.ndarray:
        """2^(-E[h(x)] / c(psi)), in (0, 1)."""
        c = average_path_length(self.psi_)
        return 2.0 ** (-self.mean_path_length(X) / c)
