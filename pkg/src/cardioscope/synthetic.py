"""Synthetic stand-ins for the heart-sound data, used by the self-test suite,
the acceptance checks and the CLI demo mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ToneTask:
    """Two-class 1-d signals distinguished by their dominant frequency.

    Each signal is a tone at ``freqs[class]`` (cycles per sample, jittered
    by ``jitter`` relative), random phase and amplitude, buried in Gaussian
    noise plus one interfering tone at a random frequency.
    """

    length: int = 1275
    freqs: tuple[float, float] = (0.030, 0.045)
    jitter: float = 0.05
    amplitude: tuple[float, float] = (0.15, 0.35)
    noise: float = 0.2
    interferer: tuple[float, float] = (0.0, 0.1)
    abnormal_fraction: float = 0.5

    def sample(self, n: int, rng: np.random.Generator, labels=None) -> tuple[np.ndarray, np.ndarray]:
        if labels is None:
            labels = (rng.random(n) < self.abnormal_fraction).astype(np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        t = np.arange(self.length)[None, :]
        f = np.asarray(self.freqs)[labels] * (1 + self.jitter * rng.uniform(-1, 1, n))
        amp = rng.uniform(*self.amplitude, n)
        phase = rng.uniform(0, 2 * np.pi, n)
        x = amp[:, None] * np.sin(2 * np.pi * f[:, None] * t + phase[:, None])
        f_int = rng.uniform(0.005, 0.2, n)
        a_int = rng.uniform(*self.interferer, n)
        x += a_int[:, None] * np.sin(2 * np.pi * f_int[:, None] * t + rng.uniform(0, 2 * np.pi, n)[:, None])
        x += self.noise * rng.standard_normal((n, self.length))
        return np.clip(x, -1.0, 1.0), labels


def low_rank_features(n: int, rng: np.random.Generator, dim: int = 193, rank: int = 6,
                      noise: float = 0.05, basis: np.ndarray | None = None,
                      shift: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectors on a smooth rank-``rank`` manifold plus isotropic noise.

    Returns (X, basis); pass ``basis`` back in to sample the same
    distribution again.
    """
    if basis is None:
        grid = np.linspace(0, 1, dim)
        basis = np.stack([np.sin(np.pi * (k + 1) * grid + k) for k in range(rank)])
    z = rng.standard_normal((n, basis.shape[0]))
    X = z @ basis + noise * rng.standard_normal((n, dim))
    if shift is not None:
        X = X + shift
    return X, basis


def anomaly_features(n_inliers: int, n_anomalies: int, rng: np.random.Generator, dim: int = 193,
                     rank: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Inliers from :func:`low_rank_features`; anomalies add energy in an
    orthogonal, high-frequency direction. Labels: 0 inlier, 1 anomaly."""
    Xi, basis = low_rank_features(n_inliers, rng, dim, rank)
    Xa, _ = low_rank_features(n_anomalies, rng, dim, rank, basis=basis)
    grid = np.linspace(0, 1, dim)
    bump = np.sign(np.sin(2 * np.pi * 13 * grid)) * np.exp(-((grid - 0.5) ** 2) / 0.05)
    Xa += rng.uniform(1.5, 3.0, (n_anomalies, 1)) * bump
    X = np.vstack([Xi, Xa])
    y = np.concatenate([np.zeros(n_inliers, np.int64), np.ones(n_anomalies, np.int64)])
    return X, y
