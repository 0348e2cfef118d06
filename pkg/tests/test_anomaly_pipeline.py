import numpy as np
import pytest

from cardioscope.anomaly_pipeline import (AnomalyProtocol, GridConfig, assemble_protocol_data,
                                          check_disjoint, contamination_count, derive_features,
                                          make_detector, run_grid, run_protocol)
from cardioscope.deep_models import TrainConfig, build_autoencoder
from cardioscope.detectors import IsolationForest, OneClassSVM
from cardioscope.errors import InsufficientAbnormal, InvalidParams, ShapeMismatch
from cardioscope.synthetic import anomaly_features, low_rank_features


@pytest.mark.parametrize("n, rate, k", [(900, 0.10, 100), (100, 0.10, 11), (92, 0.08, 8), (88, 0.12, 12)])
def test_contamination_count(n, rate, k):
    assert contamination_count(n, rate) == k
    assert abs(k / (n + k) - rate) <= 0.5 / (n + k) + 1e-12


def test_protocol_validation():
    with pytest.raises(InvalidParams):
        AnomalyProtocol(detector="lof")
    with pytest.raises(InvalidParams):
        AnomalyProtocol(detector_training="contaminated", contamination_rate=0.2)


@pytest.fixture
def split(rng):
    Xtr, ytr = anomaly_features(90, 20, rng)
    Xte, yte = anomaly_features(40, 10, rng)
    return Xtr, ytr, Xte, yte


def test_assemble_normal_only(split):
    Xtr, ytr, Xte, yte = split
    d = assemble_protocol_data(Xtr, ytr, Xte, yte, AnomalyProtocol())
    assert (d.ae_train_labels == 0).all() and len(d.ae_train) == 90
    assert (d.detector_train_labels == 0).all()


def test_assemble_contaminated(split):
    Xtr, ytr, Xte, yte = split
    p = AnomalyProtocol(ae_training="entire_data", detector_training="contaminated", seed=2)
    d = assemble_protocol_data(Xtr, ytr, Xte, yte, p)
    assert len(d.ae_train) == 110
    assert int(d.detector_train_labels.sum()) == 10
    again = assemble_protocol_data(Xtr, ytr, Xte, yte, p)
    np.testing.assert_array_equal(d.detector_train, again.detector_train)


def test_insufficient_abnormal(split):
    Xtr, ytr, Xte, yte = split
    keep = np.r_[np.flatnonzero(ytr == 0), np.flatnonzero(ytr == 1)[:3]]
    with pytest.raises(InsufficientAbnormal):
        assemble_protocol_data(Xtr[keep], ytr[keep], Xte, yte,
                               AnomalyProtocol(detector_training="contaminated"))


def test_derive_features_shapes(split):
    ae = build_autoencoder()
    X = split[0][:5]
    assert derive_features(ae, X, "embeddings").shape == (5, 96)
    assert derive_features(ae, X, "rec_loss").shape == (5, 1)
    with pytest.raises(InvalidParams):
        derive_features(ae, X, "pixels")


def test_make_detector():
    assert isinstance(make_detector("ocsvm", params={"nu": 0.2}), OneClassSVM)
    assert isinstance(make_detector("iforest", 3), IsolationForest)
    with pytest.raises(InvalidParams):
        make_detector("knn")


def test_grid_has_eight_rows(split):
    Xtr, ytr, Xte, yte = split
    cfg = GridConfig(ae=TrainConfig(epochs=2, batch=32), iforest={"n_trees": 20})
    rows = run_grid(Xtr, ytr, Xte, yte, "normal_only", cfg)
    assert len(rows) == 8
    keys = {(r.detector, r.features, r.labels) for r in rows}
    assert len(keys) == 8
    assert all(0 <= r.auroc <= 1 for r in rows)


def test_one_class_test_set_reports_error(split):
    Xtr, ytr, Xte, _ = split
    row = run_protocol(AnomalyProtocol(detector="iforest"), Xtr, ytr, Xte, np.zeros(len(Xte), int),
                       GridConfig(ae=TrainConfig(epochs=1), iforest={"n_trees": 5}))
    assert row.auroc is None and row.error.startswith("OneClassOnly")


def test_check_disjoint():
    check_disjoint(["a", "b"], ["c"])
    with pytest.raises(ShapeMismatch):
        check_disjoint(["a", "b"], ["b"])


def test_synthetic_generators(rng):
    X, basis = low_rank_features(50, rng)
    assert X.shape == (50, 193) and basis.shape == (6, 193)
    Xa, ya = anomaly_features(30, 5, rng)
    assert Xa.shape == (35, 193) and ya.sum() == 5
