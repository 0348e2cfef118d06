import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardioscope.classical import PRESETS, build_model, model_from_dict, model_to_dict, preset
from cardioscope.classical.boosting import GradientBoosting, log_loss
from cardioscope.classical.forest import RandomForest
from cardioscope.classical.svm import SVC, rbf_kernel, resolve_gamma, smo_solve
from cardioscope.classical.tree import ClassWeights, DecisionTree, best_split, entropy
from cardioscope.errors import (AllZero, ConfigInvalid, DegenerateData, InvalidParams,
                                NoConvergence)

from oracles import brute_best_split, qp_projected_gradient


def blobs(rng, n=120, d=4, sep=2.0):
    y = (rng.random(n) < 0.4).astype(int)
    X = rng.normal(size=(n, d)) + sep * y[:, None] * np.eye(d)[0]
    return X, y


# --- trees ------------------------------------------------------------------

def test_entropy_values():
    assert entropy([1, 1]) == pytest.approx(1.0)
    assert entropy([4, 0]) == 0.0
    assert entropy([1, 1, 1, 1]) == pytest.approx(2.0)
    with pytest.raises(AllZero):
        entropy([0, 0])
    with pytest.raises(InvalidParams):
        entropy([-1, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_best_split_matches_brute_force(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(4, 25))
    X = np.round(g.normal(size=(n, 3)), 1)
    y = g.integers(0, 2, n)
    w = g.uniform(0.5, 2.0, n)
    s = best_split(X, np.arange(n), w, y.astype(float), np.arange(3), "entropy")
    gain, f, thr = brute_best_split(X, y, w)
    if f is None:
        assert s is None
    else:
        assert s.gain == pytest.approx(max(gain, 0.0), abs=1e-9)
        left_ref = X[:, f] <= thr
        left = X[:, s.feature] <= s.threshold
        gl = brute_gain(X, y, w, left)
        assert gl == pytest.approx(gain, abs=1e-9)
        if s.feature == f:
            np.testing.assert_array_equal(left, left_ref)


def brute_gain(X, y, w, left):
    from oracles import weighted_entropy_bits as H
    W1, W0 = w[y == 1].sum(), w[y == 0].sum()
    g = (W1 + W0) * H(W1, W0)
    for side in (left, ~left):
        s1, s0 = w[side & (y == 1)].sum(), w[side & (y == 0)].sum()
        g -= (s1 + s0) * H(s1, s0)
    return g


def test_tree_fits_separable_data(rng):
    X, y = blobs(rng, sep=8.0)
    tree = DecisionTree().fit(X, y)
    assert (tree.predict(X) == y).all()


def test_tree_limits(rng):
    X, y = blobs(rng, sep=0.5)
    tree = DecisionTree(max_leaf_nodes=5).fit(X, y)
    assert tree.n_leaves == 5
    assert DecisionTree(max_depth=2).fit(X, y).depth <= 2


def test_class_weights_shift_predictions(rng):
    X, y = blobs(rng, sep=0.3)
    plain = DecisionTree(max_depth=1).fit(X, y).predict(X).mean()
    heavy = DecisionTree(max_depth=1, class_weights="19:1").fit(X, y).predict(X).mean()
    assert heavy >= plain
    assert ClassWeights.parse("5:1").to_str() == "5:1"
    with pytest.raises(InvalidParams):
        ClassWeights(0, 1)


def test_tree_round_trip(rng):
    X, y = blobs(rng)
    tree = DecisionTree(max_depth=4).fit(X, y)
    back = DecisionTree.from_dict(json.loads(json.dumps(tree.to_dict())))
    np.testing.assert_array_equal(back.predict_proba(X), tree.predict_proba(X))


def test_tree_errors():
    with pytest.raises(InvalidParams):
        DecisionTree(criterion="chi2")
    with pytest.raises(DegenerateData):
        DecisionTree().fit(np.zeros((2, 1)), [0, 2])


def test_regression_tree_leaf_means():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 1.0, 5.0, 5.0])
    t = DecisionTree(criterion="squared_error", max_depth=1).fit(X, y)
    np.testing.assert_allclose(t.predict_value(X), y)


# --- forest / boosting --------------------------------------------------------

def test_forest_beats_chance_and_is_deterministic(rng):
    X, y = blobs(rng, n=200)
    f1 = RandomForest(n_estimators=20, max_depth=5, seed=3).fit(X, y)
    f2 = RandomForest(n_estimators=20, max_depth=5, seed=3).fit(X, y, jobs=2)
    np.testing.assert_array_equal(f1.predict_proba(X), f2.predict_proba(X))
    assert (f1.predict(X) == y).mean() > 0.85
    p = f1.predict_proba(X)
    assert p.min() >= 0 and p.max() <= 1


def test_forest_round_trip(rng):
    X, y = blobs(rng)
    f = RandomForest(n_estimators=5, max_depth=3, seed=1).fit(X, y)
    back = RandomForest.from_dict(json.loads(json.dumps(f.to_dict())))
    np.testing.assert_array_equal(back.predict_proba(X), f.predict_proba(X))


def test_boosting_first_stage_is_newton_step(rng):
    X, y = blobs(rng, n=80)
    gb = GradientBoosting(n_estimators=1, max_depth=1, learning_rate=1.0).fit(X, y)
    p0 = y.mean()
    F0 = np.log(p0 / (1 - p0))
    stump = DecisionTree(criterion="squared_error", max_depth=1).fit(X, y - p0)
    leaves = stump.apply(X)
    F = np.full(len(y), F0)
    for leaf in np.unique(leaves):
        m = leaves == leaf
        F[m] += (y[m] - p0).sum() / (p0 * (1 - p0) * m.sum())
    np.testing.assert_allclose(gb.decision_function(X), F)


def test_boosting_loss_decreases(rng):
    X, y = blobs(rng, n=150, sep=1.0)
    gb = GradientBoosting(n_estimators=30, max_depth=2, learning_rate=0.3).fit(X, y)
    assert np.all(np.diff(gb.train_loss) <= 1e-12)
    assert gb.train_loss[-1] == pytest.approx(log_loss(y, gb.predict_proba(X)))
    back = GradientBoosting.from_dict(json.loads(json.dumps(gb.to_dict())))
    np.testing.assert_allclose(back.predict_proba(X), gb.predict_proba(X))


def test_boosting_single_class():
    with pytest.raises(DegenerateData):
        GradientBoosting().fit(np.zeros((3, 1)), [1, 1, 1])


# --- SVM --------------------------------------------------------------------

def test_rbf_kernel_and_gamma(rng):
    A, B = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
    K = rbf_kernel(A, B, 0.7)
    ref = np.exp(-0.7 * ((A[:, None] - B[None]) ** 2).sum(-1))
    np.testing.assert_allclose(K, ref)
    assert resolve_gamma("auto", A) == 0.5
    assert resolve_gamma("scale", A) == pytest.approx(1 / (2 * A.var()))
    with pytest.raises(InvalidParams):
        resolve_gamma("bogus", A)


@pytest.mark.parametrize("seed", range(6))
def test_svc_dual_matches_qp(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(4, 13))
    X = g.normal(size=(n, 2))
    y = np.where(g.random(n) < 0.5, -1.0, 1.0)
    y[:2] = (-1.0, 1.0)
    m = SVC(C=2.0, gamma=0.8, tol=1e-10).fit(X, y)
    Q = y[:, None] * y[None] * rbf_kernel(X, X, 0.8)
    a, ref = qp_projected_gradient(Q, -np.ones(n), y, np.full(n, 2.0), 0.0)
    assert m.result.objective == pytest.approx(ref, abs=1e-6)
    assert abs(m.result.alpha @ y) < 1e-10
    assert m.result.alpha.min() >= 0 and m.result.alpha.max() <= 2.0 + 1e-12


def test_svc_classifies_blobs(rng):
    X, y = blobs(rng, n=100, sep=4.0)
    m = SVC(C=10.0, gamma="scale").fit(X, y)
    assert (m.predict(X) == y).mean() > 0.95
    back = SVC.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_allclose(back.decision_function(X), m.decision_function(X))


def test_svc_class_weights_bound_alphas(rng):
    X, y = blobs(rng, n=60, sep=0.5)
    m = SVC(C=1.0, gamma=0.5, class_weights="3:1").fit(X, y)
    a = m.result.alpha
    yy = np.where(y == 1, 1, -1)
    assert a[yy == 1].max() <= 3.0 + 1e-12 and a[yy == -1].max() <= 1.0 + 1e-12


def test_smo_no_convergence(rng):
    X = rng.normal(size=(30, 2))
    y = np.where(rng.random(30) < 0.5, -1.0, 1.0)
    Q = y[:, None] * y[None] * rbf_kernel(X, X, 1.0)
    with pytest.raises(NoConvergence):
        smo_solve(Q, -np.ones(30), y, np.full(30, 100.0), np.zeros(30), tol=1e-12, max_iter=2)


# --- presets ------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build_and_round_trip(name, rng):
    kind, _, params = preset(name)
    if kind in ("forest", "boosting"):
        params["n_estimators"] = 3
    X, y = blobs(rng, n=60)
    m = build_model(kind, params, seed=0).fit(X, y)
    back = model_from_dict(json.loads(json.dumps(model_to_dict(kind, m))))
    score = "decision_function" if kind == "svm" else "predict_proba"
    np.testing.assert_allclose(getattr(back, score)(X), getattr(m, score)(X))


def test_unknown_preset():
    with pytest.raises(ConfigInvalid):
        preset("knn")
