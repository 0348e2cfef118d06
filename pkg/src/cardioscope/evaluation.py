"""Classification metrics, labelled-fraction sweeps and report output.

Abnormal (label 1) is the positive class everywhere.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, InvalidParams, OneClassOnly, UndefinedMetric


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class EvalReport:
    counts: ConfusionCounts
    accuracy: float
    sensitivity: float | None
    specificity: float | None
    macc: float | None
    auroc: float | None = None
    undefined: tuple[str, ...] = ()

    def row(self) -> dict:
        return {"accuracy": self.accuracy, "specificity": self.specificity,
                "sensitivity": self.sensitivity, "macc": self.macc}


def macc(sensitivity: float, specificity: float) -> float:
    return (sensitivity + specificity) / 2


def _binary(truth) -> np.ndarray:
    t = np.asarray(truth)
    if t.size and not np.all((t == 0) | (t == 1)):
        raise InvalidParams("truth must be binary (0 = Normal, 1 = Abnormal)")
    return t.astype(np.int64)


def confusion_counts(scores, truth, threshold: float = 0.5) -> ConfusionCounts:
    s = np.asarray(scores, dtype=np.float64)
    t = _binary(truth)
    if s.size == 0:
        raise EmptyInput("no predictions")
    if s.shape != t.shape:
        raise InvalidParams("scores and truth differ in length")
    pred = s >= threshold
    pos = t == 1
    return ConfusionCounts(tp=int(np.sum(pred & pos)), fp=int(np.sum(pred & ~pos)),
                           tn=int(np.sum(~pred & ~pos)), fn=int(np.sum(~pred & pos)))


def confusion_metrics(scores, truth, threshold: float = 0.5, strict: bool = False) -> EvalReport:
    """Accuracy, sensitivity, specificity and MAcc at ``score >= threshold``.

    A metric whose denominator is zero is reported as ``None`` and named in
    ``undefined`` (or raises :class:`UndefinedMetric` when ``strict``).
    """
    c = confusion_counts(scores, truth, threshold)
    undefined = []
    sens = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    spec = c.tn / (c.tn + c.fp) if c.tn + c.fp else None
    if sens is None:
        undefined.append("sensitivity")
    if spec is None:
        undefined.append("specificity")
    if undefined and strict:
        raise UndefinedMetric(f"undefined: {', '.join(undefined)}")
    m = macc(sens, spec) if sens is not None and spec is not None else None
    if m is None:
        undefined.append("macc")
    return EvalReport(c, (c.tp + c.tn) / c.n, sens, spec, m, undefined=tuple(undefined))


def auroc(scores, truth) -> float:
    """Mann-Whitney U / (n_pos * n_neg); tied pairs count one half."""
    s = np.asarray(scores, dtype=np.float64)
    t = _binary(truth)
    if s.shape != t.shape:
        raise InvalidParams("scores and truth differ in length")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUROC needs both classes present")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[t == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def evaluate(scores, truth, threshold: float = 0.5) -> EvalReport:
    rep = confusion_metrics(scores, truth, threshold)
    try:
        rep.auroc = auroc(scores, truth)
    except OneClassOnly:
        rep.undefined = rep.undefined + ("auroc",)
    return rep


# ---------------------------------------------------------------------------
# reports

SUPERVISED_COLUMNS = ("method", "accuracy", "specificity", "sensitivity", "macc")
SWEEP_COLUMNS = ("labelled_count", "seed", "arm", "auroc")
ANOMALY_COLUMNS = ("detector", "features", "labels", "auroc")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".6f")
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(columns, rows))


def to_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# labelled-fraction sweep

def stratified_subsample(y, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``count`` samples keeping class proportions (>= 1 per class
    when ``count >= 2``). Sorted, deterministic for a given generator."""
    y = np.asarray(y)
    if count > len(y):
        raise InvalidParams(f"count {count} exceeds the {len(y)} available samples")
    if count == len(y):
        return np.arange(len(y))
    classes = np.unique(y)
    per = {c: np.flatnonzero(y == c) for c in classes}
    want = {c: count * len(per[c]) / len(y) for c in classes}
    take = {c: int(math.floor(want[c])) for c in classes}
    if count >= len(classes):
        for c in classes:
            take[c] = max(take[c], 1)
    # largest remainders fill the rest
    while sum(take.values()) < count:
        c = max(classes, key=lambda c: (want[c] - take[c], -int(c)))
        take[c] += 1
    while sum(take.values()) > count:
        c = max(classes, key=lambda c: (take[c] - want[c], int(c)))
        take[c] -= 1
    out = [rng.choice(per[c], size=take[c], replace=False) for c in classes]
    return np.sort(np.concatenate(out))


@dataclass
class SweepRow:
    labelled_count: int
    seed: int
    arm: str
    auroc: float


Trainer = Callable[[np.ndarray, np.ndarray, int], Callable[[np.ndarray], np.ndarray]]


def sweep_labelled_fraction(X_train, y_train, X_test, y_test, grid: Sequence[int],
                            seeds: Sequence[int], arms: dict[str, Trainer]) -> list[SweepRow]:
    """For every (count, seed, arm): draw a stratified labelled subset, train
    the arm and score the fixed test set.

    ``arms`` maps a name to ``trainer(labelled_idx, y_labelled, seed) -> scorer``;
    trainers receive indices into ``X_train`` so semi-supervised arms can
    use the rest as unlabelled data. Every arm sees the same labelled indices.
    """
    X_train = np.asarray(X_train)
    rows = []
    for count in grid:
        if count > len(y_train):
            raise InvalidParams(f"grid value {count} exceeds training size {len(y_train)}")
        for seed in seeds:
            idx = stratified_subsample(y_train, count, np.random.default_rng([seed, count]))
            for name, trainer in arms.items():
                scorer = trainer(idx, np.asarray(y_train)[idx], seed)
                rows.append(SweepRow(int(count), int(seed), name, auroc(scorer(X_test), y_test)))
    rows.sort(key=lambda r: (r.labelled_count, r.seed, r.arm))
    return rows


def mean_curves(rows: Iterable[SweepRow | dict]) -> dict[str, dict[int, float]]:
    acc: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        d = asdict(r) if isinstance(r, SweepRow) else r
        acc.setdefault(d["arm"], {}).setdefault(int(d["labelled_count"]), []).append(float(d["auroc"]))
    return {arm: {c: float(np.mean(v)) for c, v in sorted(pts.items())} for arm, pts in acc.items()}


def sweep_rows_to_dicts(rows: Iterable[SweepRow]) -> list[dict]:
    return [asdict(r) for r in rows]


# ---------------------------------------------------------------------------
# SVG line plot

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def render_line_plot(rows: Iterable[SweepRow | dict], width: int = 640, height: int = 400,
                     title: str = "AUROC vs labelled samples") -> str:
    """One polyline per arm through its mean AUROC at each labelled count."""
    curves = mean_curves(rows)
    if not curves:
        raise EmptyInput("nothing to plot")
    xs = sorted({c for pts in curves.values() for c in pts})
    ys = [v for pts in curves.values() for v in pts.values()]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.05, y1 + 0.05
    ml, mr, mt, mb = 60, 110, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    # log x when counts span a decade or more
    use_log = x0 > 0 and x1 / x0 >= 10
    fx = (lambda v: (math.log(v) - math.log(x0)) / (math.log(x1) - math.log(x0))) if use_log \
        else (lambda v: (v - x0) / (x1 - x0))
    px = lambda v: ml + fx(v) * pw
    py = lambda v: mt + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for c in xs:
        out.append(f'<text x="{px(c):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{c}</text>')
    for k in range(5):
        v = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{ml - 6}" y="{py(v) + 3:.1f}" text-anchor="end" font-size="10">{v:.3f}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">labelled samples</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">AUROC</text>')
    for i, (arm, pts) in enumerate(sorted(curves.items())):
        colour = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(c):.2f},{py(v):.2f}" for c, v in sorted(pts.items()))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}"/>')
        ly = mt + 16 * (i + 1)
        out.append(f'<text x="{ml + pw + 10}" y="{ly}" font-size="11" fill="{colour}">{arm}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
