"""Finite-difference verification of backward passes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functional import branch_pattern
from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_probes: int
    worst: tuple[str, int] | None
    per_param: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def rel_error(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], *,
               fraction: float = 0.05, max_per_param: int | None = None,
               h: float = 1e-5, floor: float = 1e-7, seed: int = 0) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    ``loss_fn`` must be deterministic (dropout off, fixed batch). For each
    parameter tensor, ``ceil(fraction * size)`` entries (at least one, at most
    ``max_per_param``) are probed. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients
    from reporting pure rounding noise as error.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    rng = np.random.default_rng(seed)
    worst, worst_at, per = 0.0, None, {}
    n_probes = 0
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            k = max(1, math.ceil(fraction * flat.size))
            if max_per_param is not None:
                k = min(k, max_per_param)
            idx = np.sort(rng.choice(flat.size, size=min(k, flat.size), replace=False))
            agrad = analytic[name].reshape(-1)
            per[name] = 0.0
            for i in idx:
                old = flat[i]
                flat[i] = old + h
                up = loss_fn().item()
                flat[i] = old - h
                down = loss_fn().item()
                flat[i] = old
                num = (up - down) / (2 * h)
                err = rel_error(agrad[i], num, floor)
                per[name] = max(per[name], err)
                n_probes += 1
                if err > worst:
                    worst, worst_at = err, (name, int(i))
    for p in params.values():
        p.grad = None
    return GradCheckReport(worst, n_probes, worst_at, per)


def input_grad_check(fn: Callable[[Tensor], Tensor], x: np.ndarray, *, h: float = 1e-5,
                     floor: float = 1e-7, max_probes: int | None = None, seed: int = 0) -> float:
    """Max relative error of d fn(x) / dx over (a sample of) input entries."""
    xt = Tensor(x.copy(), requires_grad=True)
    fn(xt).backward()
    agrad = xt.grad.reshape(-1)
    flat = xt.data.reshape(-1)
    idx = np.arange(flat.size)
    if max_probes is not None and flat.size > max_probes:
        idx = np.sort(np.random.default_rng(seed).choice(flat.size, max_probes, replace=False))
    worst = 0.0
    with no_grad():
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = fn(xt).item()
            flat[i] = old - h
            down = fn(xt).item()
            flat[i] = old
            worst = max(worst, rel_error(agrad[i], (up - down) / (2 * h), floor))
    return worst


def _evaluate(loss_fn, pattern: list | None) -> float:
    if pattern is None:
        return loss_fn().item()
    with branch_pattern("replay", pattern):
        return loss_fn().item()


def directional_grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], *,
                           directions: int = 1, h: float = 1e-6, floor: float = 1e-7,
                           noise_factor: float = 1e5, freeze_branches: bool = False,
                           by_layer: bool = False, seed: int = 0) -> GradCheckReport:
    """Compare <grad, v> with (L(p + h v) - L(p - h v)) / 2h per parameter
    tensor (or per layer).

    ``v`` is a random unit-norm direction over the whole tensor, so every
    entry of the backward pass contributes. Two forward passes per tensor and
    direction, which keeps full-size networks cheap to verify.

    A small ``h`` keeps ReLU-type kinks from being crossed; the price is
    rounding noise of about eps |L| / h in the quotient, so the denominator
    floor is raised to ``noise_factor`` times that level. Directional
    derivatives below it (e.g. a conv bias cancelled by a following batch
    norm) cannot be resolved by any difference quotient at this ``h``.

    Large ReLU-type networks have so many pre-activations near zero that
    some cross a kink even for tiny ``h``. ``freeze_branches`` records the
    branch pattern at the base point and replays it for the shifted
    evaluations; that function agrees with ``loss_fn`` on the open linear
    piece containing the base point, so it has the same gradient there.

    ``by_layer`` draws one joint direction over all tensors sharing a name
    prefix (``"3.weight"`` and ``"3.bias"`` form group ``"3"``), halving the
    number of forward passes.
    """
    for p in params.values():
        p.grad = None
    pattern: list = []
    if freeze_branches:
        with branch_pattern("record", pattern):
            loss = loss_fn()
    else:
        loss = loss_fn()
    loss.backward()
    floor = max(floor, noise_factor * np.finfo(np.float64).eps * abs(loss.item()) / h)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    groups: dict[str, list[str]] = {}
    for name in params:
        groups.setdefault(name.rsplit(".", 1)[0] if by_layer else name, []).append(name)
    rng = np.random.default_rng(seed)
    worst, worst_at, per = 0.0, None, {}
    n_probes = 0
    with no_grad():
        for gname, names in groups.items():
            per[gname] = 0.0
            base = [params[n].data.copy() for n in names]
            for d in range(directions):
                vs = [rng.normal(size=b.shape) for b in base]
                norm = np.sqrt(sum(np.sum(v * v) for v in vs))
                vs = [v / norm for v in vs]
                quotient = []
                for sign in (1.0, -1.0):
                    for n, b, v in zip(names, base, vs):
                        params[n].data[...] = b + sign * h * v
                    quotient.append(_evaluate(loss_fn, pattern if freeze_branches else None))
                for n, b in zip(names, base):
                    params[n].data[...] = b
                a = float(sum(np.sum(analytic[n] * v) for n, v in zip(names, vs)))
                err = rel_error(a, (quotient[0] - quotient[1]) / (2 * h), floor)
                per[gname] = max(per[gname], err)
                n_probes += 1
                if err > worst:
                    worst, worst_at = err, (gname, d)
    for p in params.values():
        p.grad = None
    return GradCheckReport(worst, n_probes, worst_at, per)
