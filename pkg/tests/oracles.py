"""Slow, obviously-correct reference implementations used only by tests."""

import numpy as np


def pair_count_auroc(scores, truth):
    """O(n^2) Mann-Whitney count; ties score one half."""
    pos = [s for s, t in zip(scores, truth) if t == 1]
    neg = [s for s, t in zip(scores, truth) if t == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def project_bisect(v, y, C, target, iters=60):
    """Projection onto {0 <= a <= C, y.a = target} by bisection on the multiplier."""
    C = np.broadcast_to(C, v.shape)
    f = lambda mu: np.clip(v - mu * y, 0, C) @ y - target
    lo, hi = -1.0, 1.0
    while f(lo) < 0:
        lo *= 2
    while f(hi) > 0:
        hi *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * y, 0, C)


def qp_projected_gradient(Q, p, y, C, target, iters=3000):
    """min 1/2 a'Qa + p'a over the box/hyperplane set (accelerated projected gradient)."""
    n = len(y)
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    a = project_bisect(np.zeros(n), y, C, target)
    z, t = a.copy(), 1.0
    for _ in range(iters):
        a_new = project_bisect(z - step * (Q @ z + p), y, C, target)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
    return a, 0.5 * a @ Q @ a + p @ a


def weighted_entropy_bits(w1, w0):
    tot = w1 + w0
    h = 0.0
    for c in (w1, w0):
        if c > 0:
            h -= c / tot * np.log2(c / tot)
    return h


def brute_best_split(X, y, w):
    """Exhaustive scan over every feature and midpoint threshold (entropy gain)."""
    best = (-np.inf, None, None)
    W1, W0 = w[y == 1].sum(), w[y == 0].sum()
    parent = (W1 + W0) * weighted_entropy_bits(W1, W0)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (a + b)
            left = X[:, f] <= thr
            gain = parent
            for side in (left, ~left):
                s1, s0 = w[side & (y == 1)].sum(), w[side & (y == 0)].sum()
                gain -= (s1 + s0) * weighted_entropy_bits(s1, s0)
            if gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best
