import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardioscope.balancing import nearest_minority_neighbours, smote
from cardioscope.errors import DegenerateMinority, InvalidParams


def brute_neighbours(Xm, k):
    out = []
    for i in range(len(Xm)):
        d = [(float(np.sum((Xm[i] - Xm[j]) ** 2)), j) for j in range(len(Xm)) if j != i]
        out.append([j for _, j in sorted(d)[:k]])
    return np.array(out)


def test_neighbours_match_brute_force(rng):
    Xm = rng.normal(size=(25, 4))
    np.testing.assert_array_equal(nearest_minority_neighbours(Xm, 5), brute_neighbours(Xm, 5))


def test_neighbour_ties_go_to_lower_index():
    Xm = np.array([[0.0], [1.0], [-1.0], [2.0]])
    assert nearest_minority_neighbours(Xm, 1)[0].tolist() == [1]


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(16, 40), st.integers(1, 6), st.integers(0, 1000))
def test_smote_balances_and_interpolates(n_min, n_maj, k, seed):
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(n_min + n_maj, 3))
    y = np.array([1] * n_min + [0] * n_maj)
    out = smote(X, y, k=k, seed=seed)
    assert (out.y == 0).sum() == (out.y == 1).sum() == n_maj
    np.testing.assert_array_equal(out.X[:len(X)], X)
    assert out.synthetic.sum() == n_maj - n_min
    assert np.all(out.y[out.synthetic] == 1)
    Xm = X[y == 1]
    nn = brute_neighbours(Xm, min(k, n_min - 1))
    new = out.X[out.synthetic]
    for s, p in enumerate(new):
        a = Xm[s % n_min]  # round-robin anchor
        ok = False
        for j in nn[s % n_min]:
            d = Xm[j] - a
            lam = float(d @ (p - a) / (d @ d))
            if -1e-12 <= lam <= 1 + 1e-12 and np.allclose(a + lam * d, p, atol=1e-9):
                ok = True
        assert ok


def test_smote_deterministic(rng):
    X = rng.normal(size=(30, 2))
    y = np.r_[np.ones(5), np.zeros(25)].astype(int)
    a, b = smote(X, y, seed=3), smote(X, y, seed=3)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, smote(X, y, seed=4).X)


def test_smote_already_balanced(rng):
    X = rng.normal(size=(4, 2))
    out = smote(X, [0, 1, 0, 1])
    assert not out.synthetic.any() and len(out.X) == 4


def test_smote_errors(rng):
    X = rng.normal(size=(6, 2))
    with pytest.raises(DegenerateMinority):
        smote(X, [1, 0, 0, 0, 0, 0])
    with pytest.raises(InvalidParams):
        smote(X, [0] * 6)
    with pytest.raises(InvalidParams):
        smote(X, [0, 1, 0, 1, 0, 0], k=0)
