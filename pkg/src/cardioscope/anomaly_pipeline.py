"""Unsupervised protocol: autoencoder on (normal-only or all) training
features, detector on embeddings or reconstruction loss, AUROC on the test
set with Abnormal as the positive class."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .deep_models import (Autoencoder, Standardizer, TrainConfig, build_autoencoder, encode,
                          reconstruction_errors, train_autoencoder)
from .detectors import IsolationForest, OneClassSVM
from .errors import InsufficientAbnormal, InvalidParams, OneClassOnly, ShapeMismatch
from .evaluation import auroc

AE_TRAINING = ("normal_only", "entire_data")
DETECTOR_TRAINING = ("normal", "contaminated")
FEATURE_KINDS = ("embeddings", "rec_loss")
DETECTORS = ("ocsvm", "iforest")
LABEL_NAMES = {"normal": "Normal", "contaminated": "Contaminated"}


@dataclass
class AnomalyProtocol:
    ae_training: str = "normal_only"
    detector_training: str = "normal"
    feature_kind: str = "embeddings"
    detector: str = "ocsvm"
    contamination_rate: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for value, allowed in ((self.ae_training, AE_TRAINING),
                               (self.detector_training, DETECTOR_TRAINING),
                               (self.feature_kind, FEATURE_KINDS), (self.detector, DETECTORS)):
            if value not in allowed:
                raise InvalidParams(f"{value!r} is not one of {allowed}")
        if self.detector_training == "contaminated" and not 0.08 <= self.contamination_rate <= 0.12:
            raise InvalidParams("contamination rate must lie in [0.08, 0.12]")


@dataclass
class ProtocolData:
    ae_train: np.ndarray
    ae_train_labels: np.ndarray
    detector_train: np.ndarray
    detector_train_labels: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray


def contamination_count(n_normal: int, rate: float) -> int:
    """Abnormal rows to add so that abnormal / total equals ``rate``."""
    return int(math.floor(rate * n_normal / (1.0 - rate) + 0.5))


def assemble_protocol_data(X_train, y_train, X_test, y_test,
                           protocol: AnomalyProtocol) -> ProtocolData:
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    normal = np.flatnonzero(y_train == 0)
    abnormal = np.flatnonzero(y_train == 1)
    ae_idx = normal if protocol.ae_training == "normal_only" else np.arange(len(y_train))
    det_idx = normal
    if protocol.detector_training == "contaminated":
        k = contamination_count(len(normal), protocol.contamination_rate)
        if k > len(abnormal):
            raise InsufficientAbnormal(f"need {k} abnormal samples, only {len(abnormal)} available")
        rng = np.random.default_rng([protocol.seed, 0xC0])
        det_idx = np.sort(np.concatenate([normal, rng.choice(abnormal, k, replace=False)]))
    return ProtocolData(X_train[ae_idx], y_train[ae_idx], X_train[det_idx], y_train[det_idx],
                        np.asarray(X_test, dtype=np.float64), np.asarray(y_test, dtype=np.int64))


def derive_features(ae: Autoencoder, X, kind: str) -> np.ndarray:
    if kind == "embeddings":
        return encode(ae, X)
    if kind == "rec_loss":
        return reconstruction_errors(ae, X)[:, None]
    raise InvalidParams(f"unknown feature kind {kind!r}")


def make_detector(name: str, seed: int = 0, params: dict | None = None):
    params = dict(params or {})
    if name == "ocsvm":
        return OneClassSVM(**params)
    if name == "iforest":
        return IsolationForest(seed=seed, **params)
    raise InvalidParams(f"unknown detector {name!r}")


@dataclass
class AnomalyRow:
    detector: str
    features: str
    labels: str
    auroc: float | None
    ae_training: str = "normal_only"
    error: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class GridConfig:
    ae: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30, batch=32, lr=1e-3))
    contamination_rate: float = 0.10
    ocsvm: dict = field(default_factory=dict)
    iforest: dict = field(default_factory=dict)
    seed: int = 0


def fit_autoencoder(X, config: TrainConfig, seed: int) -> tuple[Autoencoder, Standardizer]:
    std = Standardizer.fit(X)
    ae = build_autoencoder(np.random.default_rng(seed))
    train_autoencoder(ae, std.transform(X), config)
    return ae, std


def run_protocol(protocol: AnomalyProtocol, X_train, y_train, X_test, y_test,
                 config: GridConfig | None = None, autoencoder=None) -> AnomalyRow:
    """One grid point. ``autoencoder`` = (ae, standardizer) reuses a trained
    model for the protocol's AE condition."""
    cfg = config or GridConfig()
    data = assemble_protocol_data(X_train, y_train, X_test, y_test, protocol)
    if autoencoder is None:
        autoencoder = fit_autoencoder(data.ae_train, cfg.ae, protocol.seed)
    ae, std = autoencoder
    train_feats = derive_features(ae, std.transform(data.detector_train), protocol.feature_kind)
    test_feats = derive_features(ae, std.transform(data.test), protocol.feature_kind)
    params = cfg.ocsvm if protocol.detector == "ocsvm" else cfg.iforest
    det = make_detector(protocol.detector, protocol.seed, params).fit(train_feats)
    row = AnomalyRow(protocol.detector, protocol.feature_kind,
                     LABEL_NAMES[protocol.detector_training], None, protocol.ae_training)
    try:
        row.auroc = auroc(det.score(test_feats), data.test_labels)
    except OneClassOnly as exc:
        row.error = f"{exc.code}: {exc}"
    return row


def run_grid(X_train, y_train, X_test, y_test, ae_training: str = "normal_only",
             config: GridConfig | None = None) -> list[AnomalyRow]:
    """detector x feature kind x detector-training condition: 8 rows, one
    autoencoder shared by all of them."""
    cfg = config or GridConfig()
    base = AnomalyProtocol(ae_training=ae_training, seed=cfg.seed,
                           contamination_rate=cfg.contamination_rate)
    data = assemble_protocol_data(X_train, y_train, X_test, y_test, base)
    ae = fit_autoencoder(data.ae_train, cfg.ae, cfg.seed)
    rows = []
    for det, kind, labels in itertools.product(DETECTORS, FEATURE_KINDS, DETECTOR_TRAINING):
        p = AnomalyProtocol(ae_training, labels, kind, det, cfg.contamination_rate, cfg.seed)
        rows.append(run_protocol(p, X_train, y_train, X_test, y_test, cfg, autoencoder=ae))
    return rows


def check_disjoint(train_ids, test_ids) -> None:
    overlap = set(train_ids) & set(test_ids)
    if overlap:
        raise ShapeMismatch(f"{len(overlap)} ids appear in both training and test data")
