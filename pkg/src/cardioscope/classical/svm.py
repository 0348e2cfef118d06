"""RBF support vector classifier trained by SMO.

The solver handles the generic dual

    min_a  1/2 a^T Q a + p^T a    s.t.  y^T a = const,  0 <= a_i <= C_i

with second-order working-set selection (maximal violator i, then the j
with the largest guaranteed decrease). The one-class SVM reuses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateData, InvalidParams, NoConvergence, UntrainedModel
from .tree import ClassWeights

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def resolve_gamma(gamma, X) -> float:
    """'auto' is 1 / n_features; 'scale' is 1 / (n_features * X.var())."""
    if gamma == "auto":
        return 1.0 / X.shape[1]
    if gamma == "scale":
        v = X.var()
        return 1.0 / (X.shape[1] * v) if v > 0 else 1.0
    try:
        g = float(gamma)
    except (TypeError, ValueError):
        raise InvalidParams(f"gamma must be 'auto', 'scale' or a positive number, got {gamma!r}") from None
    if g <= 0:
        raise InvalidParams("gamma must be positive")
    return g


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    grad: np.ndarray
    n_iter: int
    objective: float


def dual_objective(Q, p, alpha) -> float:
    return float(0.5 * alpha @ Q @ alpha + p @ alpha)


def smo_solve(Q, p, y, C, alpha0, tol: float = 1e-3, max_iter: int = 100_000) -> SmoResult:
    """SMO on the generic dual. ``alpha0`` must be feasible; ``y`` is +-1."""
    Q = np.asarray(Q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    C = np.broadcast_to(np.asarray(C, dtype=np.float64), y.shape).copy()
    a = np.array(alpha0, dtype=np.float64)
    G = Q @ a + p
    QD = np.diag(Q).copy()
    n_iter = 0
    while True:
        up = np.where(y > 0, a < C, a > 0)
        low = np.where(y > 0, a > 0, a < C)
        v = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        m_up = v[i]
        m_low = np.min(np.where(low, v, np.inf))
        if m_up - m_low < tol:
            break
        if n_iter >= max_iter:
            raise NoConvergence(f"SMO did not converge in {max_iter} iterations "
                                f"(violation {m_up - m_low:.3g})")
        # second-order choice of j among violating low candidates
        b = m_up - v
        cand = low & (b > 0)
        quad = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        quad = np.where(quad > 0, quad, TAU)
        j = int(np.argmax(np.where(cand, b * b / quad, -np.inf)))
        n_iter += 1

        Qi, Qj = Q[i], Q[j]
        ai, aj = a[i], a[j]
        Ci, Cj = C[i], C[j]
        if y[i] != y[j]:
            q = QD[i] + QD[j] + 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Qi[j]
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            s = ai + aj
            ai -= delta
            aj += delta
            if s > Ci:
                if ai > Ci:
                    ai, aj = Ci, s - Ci
            elif aj < 0:
                aj, ai = 0.0, s
            if s > Cj:
                if aj > Cj:
                    aj, ai = Cj, s - Cj
            elif ai < 0:
                ai, aj = 0.0, s
        G += Qi * (ai - a[i]) + Qj * (aj - a[j])
        a[i], a[j] = ai, aj
    return SmoResult(a, _rho(a, G, y, C), G, n_iter, dual_objective(Q, p, a))


def _rho(a, G, y, C) -> float:
    yG = y * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def _pm1(y) -> np.ndarray:
    y = np.asarray(y)
    if np.all((y == 0) | (y == 1)):
        return np.where(y == 1, 1.0, -1.0)
    if np.all((y == -1) | (y == 1)):
        return y.astype(np.float64)
    raise DegenerateData("labels must be 0/1 or -1/+1")


class SVC:
    """Soft-margin RBF classifier; per-sample box C_i = C * class weight."""

    def __init__(self, C: float = 1.0, gamma="auto", class_weights=None,
                 tol: float = 1e-3, max_iter: int = 100_000):
        if C <= 0:
            raise InvalidParams("C must be positive")
        self.C = float(C)
        self.gamma = gamma
        self.class_weights = ClassWeights.parse(class_weights)
        self.tol = tol
        self.max_iter = max_iter
        self.support_vectors: np.ndarray | None = None
        self.dual_coef: np.ndarray | None = None   # alpha_i * y_i
        self.b = 0.0
        self.gamma_: float | None = None
        self.result: SmoResult | None = None

    def box(self, y_pm) -> np.ndarray:
        return self.C * self.class_weights.per_sample((y_pm > 0).astype(np.int64))

    def fit(self, X, y) -> "SVC":
        X = np.asarray(X, dtype=np.float64)
        yp = _pm1(y)
        if len(np.unique(yp)) < 2:
            raise DegenerateData("both classes must be present")
        self.gamma_ = resolve_gamma(self.gamma, X)
        K = rbf_kernel(X, X, self.gamma_)
        Q = yp[:, None] * yp[None, :] * K
        res = smo_solve(Q, -np.ones(len(X)), yp, self.box(yp), np.zeros(len(X)),
                        self.tol, self.max_iter)
        self.result = res
        sv = res.alpha > 0
        self.support_vectors = X[sv]
        self.dual_coef = (res.alpha * yp)[sv]
        self.b = -res.rho
        return self

    def decision_function(self, X) -> np.ndarray:
        if self.support_vectors is None:
            raise UntrainedModel("SVM is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if len(self.support_vectors) == 0:
            return np.full(len(X), self.b)
        return rbf_kernel(X, self.support_vectors, self.gamma_) @ self.dual_coef + self.b

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int64)

    # scores double as probabilities for the shared report code
    predict_proba = decision_function

    def to_dict(self) -> dict:
        return {"C": self.C, "gamma": self.gamma_, "class_weights": self.class_weights.to_str(),
                "b": self.b, "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SVC":
        m = cls(d["C"], d["gamma"], d.get("class_weights"))
        m.gamma_ = d["gamma"]
        m.b = d["b"]
        m.support_vectors = np.asarray(d["support_vectors"], dtype=np.float64).reshape(-1, len(d["support_vectors"][0]) if d["support_vectors"] else 0)
        m.dual_coef = np.asarray(d["dual_coef"], dtype=np.float64)
        return m
