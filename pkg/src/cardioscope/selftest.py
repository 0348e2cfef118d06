"""Quick built-in verification suites run by ``cardioscope selftest``.

Each suite compares a component against an independent route to the same
answer (finite differences, brute-force counting, projected gradient) on
small random instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    failures: list[str] = field(default_factory=list)

    def check(self, ok: bool, what: str) -> None:
        self.total += 1
        if ok:
            self.passed += 1
        else:
            self.failures.append(what)

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def pairwise_auroc(scores, truth) -> float:
    """O(n^2) pair counting; ties count one half."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth)
    pos, neg = s[t == 1], s[t == 0]
    d = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(d > 0) + 0.5 * np.count_nonzero(d == 0)
    return float(wins / (len(pos) * len(neg)))


def project_box_hyperplane(v, y, C, target: float = 0.0):
    """Euclidean projection onto {0 <= a <= C, y.a = target} (y entries +-1).

    a(mu) = clip(v - mu y, 0, C) makes y.a(mu) piecewise linear and
    non-increasing in mu; locate the root between sorted breakpoints and
    interpolate.
    """
    v = np.asarray(v, dtype=np.float64)
    C = np.broadcast_to(C, v.shape)
    bps = np.unique(np.concatenate([v / y, (v - C) / y]))
    A = np.clip(v[None, :] - bps[:, None] * y[None, :], 0.0, C[None, :])
    phi = A @ y - target
    if phi[0] < 0 or phi[-1] > 0:
        raise ValueError("infeasible projection target")
    k = int(np.searchsorted(-phi, 0.0))
    if phi[k] == 0 or k == 0:
        return A[k]
    lo, hi = bps[k - 1], bps[k]
    mu = lo + (hi - lo) * phi[k - 1] / (phi[k - 1] - phi[k])
    return np.clip(v - mu * y, 0.0, C)


def projected_gradient_qp(Q, p, y, C, target: float = 0.0, iters: int = 5000):
    """min 1/2 a^T Q a + p^T a over the box/hyperplane set, FISTA-style."""
    step = 1.0 / max(np.linalg.eigvalsh(Q).max(), 1e-12)
    a = project_box_hyperplane(np.zeros(len(y)), y, C, target)
    z, t = a.copy(), 1.0
    for _ in range(iters):
        a_new = project_box_hyperplane(z - step * (Q @ z + p), y, C, target)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
    return a, float(0.5 * a @ Q @ a + p @ a)


def suite_auroc(n_instances: int = 20, seed: int = 0) -> SuiteResult:
    from .evaluation import auroc
    r = SuiteResult("auroc")
    rng = np.random.default_rng(seed)
    for i in range(n_instances):
        n = int(rng.integers(2, 60))
        t = rng.integers(0, 2, n)
        t[0], t[1] = 0, 1
        s = np.round(rng.normal(size=n), 1)  # coarse rounding forces ties
        r.check(auroc(s, t) == pairwise_auroc(s, t), f"instance {i}")
    return r


def suite_smo(n_instances: int = 5, seed: int = 0) -> SuiteResult:
    from .classical.svm import SVC, rbf_kernel
    from .detectors import OneClassSVM
    r = SuiteResult("smo")
    rng = np.random.default_rng(seed)
    for i in range(n_instances):
        n = int(rng.integers(4, 13))
        X = rng.normal(size=(n, 2))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        y[0], y[1] = -1.0, 1.0
        m = SVC(C=1.0, gamma=0.5, tol=1e-9).fit(X, y)
        Q = y[:, None] * y[None, :] * rbf_kernel(X, X, 0.5)
        _, ref = projected_gradient_qp(Q, -np.ones(n), y, np.ones(n))
        r.check(abs(m.result.objective - ref) < 1e-6, f"svc instance {i}")
        oc = OneClassSVM(nu=0.5, gamma=0.5, tol=1e-9).fit(X)
        K = rbf_kernel(X, X, 0.5)
        _, ref = projected_gradient_qp(K, np.zeros(n), np.ones(n), np.full(n, 1 / (0.5 * n)), 1.0)
        r.check(abs(oc.objective - ref) < 1e-6, f"ocsvm instance {i}")
    return r


def suite_gradcheck(seed: int = 0) -> SuiteResult:
    from .nn import L, build_sequential, grad_check
    r = SuiteResult("gradcheck")
    rng = np.random.default_rng(seed)
    nets = {
        "dense": ([L("dense", nodes=4), L("tanh"), L("dense", nodes=3)], (5,)),
        "conv": ([L("conv1d", filters=3, kernel=3, stride=2), L("leaky_relu", slope=0.2),
                  L("maxpool1d", kernel=2), L("flatten"), L("dense", nodes=2)], (2, 15)),
        "conv_transpose": ([L("conv_transpose1d", filters=2, kernel=4, stride=2, padding=1),
                            L("batchnorm1d"), L("relu"), L("upsample1d", size=2),
                            L("zero_pad1d", left=1, right=0), L("adaptive_avg_pool1d"),
                            L("flatten"), L("sigmoid")], (3, 6)),
    }
    for name, (specs, shape) in nets.items():
        net = build_sequential(specs, shape, rng)
        x = rng.normal(size=(4,) + shape)
        w = rng.normal(size=(4,) + net.output_shape)
        rep = grad_check(lambda: (net(x, training=True) * w).sum(), net.named_params(),
                         fraction=1.0, seed=seed)
        r.check(rep.max_rel_error < 1e-4, f"{name}: {rep.max_rel_error:.2e}")
    return r


def suite_shapes() -> SuiteResult:
    from .deep_models import build_autoencoder
    from .ssl_gan import generator_output_length, discriminator_length_chain
    r = SuiteResult("shapes")
    r.check(generator_output_length() == 4987, "generator length")
    r.check(tuple(discriminator_length_chain(4987)) ==
            (4980, 2487, 1240, 617, 305, 149, 71, 32), "discriminator chain")
    ae = build_autoencoder()
    r.check(ae.encoder.output_shape == (96,), "latent")
    r.check(ae.decoder.output_shape == (1, 193), "reconstruction")
    return r


def suite_metrics() -> SuiteResult:
    from fractions import Fraction
    from .evaluation import confusion_metrics, macc
    r = SuiteResult("metrics")
    rep = confusion_metrics([0.9, 0.2, 0.7, 0.1], [1, 0, 0, 1])
    r.check(rep.sensitivity == 0.5 and rep.specificity == 0.5, "sens/spec")
    r.check(macc(Fraction("0.935"), Fraction("0.834")) == Fraction("0.8845"), "macc exact")
    return r


SUITES = {"auroc": suite_auroc, "smo": suite_smo, "gradcheck": suite_gradcheck,
          "shapes": suite_shapes, "metrics": suite_metrics}


def run_all(names=None) -> list[SuiteResult]:
    return [SUITES[n]() for n in (names or SUITES)]
