"""SMOTE oversampling of the minority class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMinority, InvalidParams


@dataclass
class BalancedSet:
    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray  # bool mask, True for generated rows


def nearest_minority_neighbours(Xm: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other rows (Euclidean), ties to lower index."""
    sq = np.sum(Xm ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * Xm @ Xm.T
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def smote(X, y, k: int = 5, seed: int = 0) -> BalancedSet:
    """Oversample the minority class until both classes have equal counts.

    Minority anchors are visited round-robin in input order; for each anchor a
    neighbour is drawn uniformly from its k nearest minority neighbours and a
    point is placed uniformly on the connecting segment. Original rows are
    returned unchanged, synthetic rows are appended.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise InvalidParams("X must be 2-d with one label per row")
    if k < 1:
        raise InvalidParams("k must be >= 1")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise InvalidParams(f"expected two classes, got {classes.tolist()}")
    if counts[0] == counts[1]:
        return BalancedSet(X.copy(), y.copy(), np.zeros(len(y), dtype=bool))

    minority = classes[np.argmin(counts)]
    idx = np.flatnonzero(y == minority)
    if idx.size < 2:
        raise DegenerateMinority("SMOTE needs at least two minority samples")
    n_new = int(counts.max() - counts.min())
    Xm = X[idx]
    k_eff = min(k, idx.size - 1)
    nn = nearest_minority_neighbours(Xm, k_eff)

    rng = np.random.default_rng(seed)
    new = np.empty((n_new, X.shape[1]))
    for s in range(n_new):
        a = s % idx.size
        b = nn[a, rng.integers(k_eff)]
        u = rng.random()
        new[s] = Xm[a] + u * (Xm[b] - Xm[a])

    return BalancedSet(
        np.vstack([X, new]),
        np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)]),
        np.concatenate([np.zeros(len(y), dtype=bool), np.ones(n_new, dtype=bool)]),
    )
