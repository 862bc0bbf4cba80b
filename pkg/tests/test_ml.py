import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annni_qml import ml, model
from annni_qml.lanczos import ConvergenceError


def _toy_dataset(n, rng):
    X = rng.uniform(size=(n, 3))
    return model.Dataset(np.arange(n) / n, np.zeros(n), X, rng.integers(0, 3, n), ["a", "b", "c"], 4)


# ---------------------------------------------------------------- scaling

def test_scaler_examples():
    p = ml.fit_scaler(np.array([[-1.0, 5.0], [0.0, 5.0], [1.0, 5.0]]))
    out = ml.apply_scaler(p, np.array([[-1.0, 5.0], [0.0, 5.0], [1.0, 5.0], [3.0, 7.0]]))
    np.testing.assert_allclose(out[:, 0], [0.0, 0.5, 1.0, 2.0])
    np.testing.assert_array_equal(out[:, 1], 0.0)
    with pytest.raises(ValueError):
        ml.fit_scaler(np.empty((0, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_scaled_training_data_in_unit_box(n, seed):
    X = np.random.default_rng(seed).normal(size=(n, 4)) * 10
    p = ml.fit_scaler(X)
    assert np.all(p.max >= p.min)
    S = ml.apply_scaler(p, X)
    assert S.min() >= 0.0 and S.max() <= 1.0 + 1e-12


# ---------------------------------------------------------------- splitting

def test_split_sizes_and_partition(rng):
    train, test = ml.split_indices(10_000, ml.SplitSpec(0.3, seed=4))
    assert train.size == 7000 and test.size == 3000
    assert np.intersect1d(train, test).size == 0
    np.testing.assert_array_equal(np.union1d(train, test), np.arange(10_000))
    again = ml.split_indices(10_000, ml.SplitSpec(0.3, seed=4))
    np.testing.assert_array_equal(again[1], test)
    other = ml.split_indices(10_000, ml.SplitSpec(0.3, seed=5))
    assert not np.array_equal(other[1], test)


@given(st.integers(2, 500), st.floats(0.01, 0.99), st.integers(0, 100))
def test_split_is_partition_property(n, frac, seed):
    tr, te = ml.split_indices(n, ml.SplitSpec(frac, seed))
    assert te.size == int(np.floor(frac * n + 0.5))
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(n))


def test_split_rejects_bad_input():
    with pytest.raises(ValueError):
        ml.SplitSpec(1.0)
    with pytest.raises(ValueError):
        ml.split_indices(1, ml.SplitSpec())


def test_unshuffled_split_takes_leading_rows():
    tr, te = ml.split_indices(10, ml.SplitSpec(0.3, shuffle=False))
    np.testing.assert_array_equal(te, [0, 1, 2])


def test_dataset_split(rng):
    ds = _toy_dataset(50, rng)
    train, test = ml.train_test_split(ds, ml.SplitSpec(seed=1))
    assert len(train) == 35 and len(test) == 15
    assert np.all(np.diff(train.kappa) > 0)


# ---------------------------------------------------------------- RBF

def test_rbf_examples(rng):
    x = rng.normal(size=4)
    assert ml.rbf_kernel(x, x, 0.7) == 1.0
    assert abs(ml.rbf_kernel([0.0, 0.0], [1.0, 0.0], 1.0) - np.exp(-1)) < 1e-15
    y = rng.normal(size=4)
    assert ml.rbf_kernel(x, y, 0.3) == ml.rbf_kernel(y, x, 0.3)
    with pytest.raises(ValueError):
        ml.rbf_kernel([1.0], [1.0, 2.0], 1.0)


def test_rbf_gram_matches_pointwise(rng):
    A, B = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    K = ml.rbf_gram(A, B, 0.4)
    ref = np.array([[ml.rbf_kernel(a, b, 0.4) for b in B] for a in A])
    np.testing.assert_allclose(K, ref, atol=1e-14)


def test_scale_gamma():
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert ml.scale_gamma(X) == 1.0 / (2 * 0.25)


# ---------------------------------------------------------------- SVM oracles

def _dual_objective(alpha, K, y):
    Q = (y[:, None] * y[None, :]) * K
    return alpha.sum() - 0.5 * alpha @ Q @ alpha


def _exhaustive_qp(K, y, C):
    """Best feasible KKT point over all 3^n (lower, upper, free) assignments."""
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    best, best_alpha = -np.inf, None
    for states in itertools.product((0, 1, 2), repeat=n):
        alpha = np.array([0.0 if s == 0 else C for s in states])
        free = [i for i, s in enumerate(states) if s == 2]
        if free:
            fixed = [i for i in range(n) if i not in free]
            f = len(free)
            A = np.zeros((f + 1, f + 1))
            A[:f, :f] = Q[np.ix_(free, free)]
            A[:f, f] = y[free]
            A[f, :f] = y[free]
            rhs = np.concatenate([1 - Q[np.ix_(free, fixed)] @ alpha[fixed], [-y[fixed] @ alpha[fixed]]])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[free] = sol[:f]
        if np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12) or abs(y @ alpha) > 1e-9:
            continue
        obj = _dual_objective(alpha, K, y)
        if obj > best:
            best, best_alpha = obj, alpha
    return best, best_alpha


def test_xor_matches_exhaustive_qp():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    svm = ml.svm_train(X, y, C=10.0, gamma=1.0)
    assert ml.accuracy(svm.predict(X), y) == 1.0
    K = ml.rbf_gram(X, X, 1.0)
    yy = np.where(y == 0, 1.0, -1.0)
    best, alpha_ref = _exhaustive_qp(K, yy, 10.0)
    alpha, _, _, _ = ml.solve_binary(K, yy, 10.0, tol=1e-10)
    assert abs(_dual_objective(alpha, K, yy) - best) < 1e-8
    np.testing.assert_allclose(alpha, alpha_ref, atol=1e-6)


@pytest.mark.parametrize("labels,C", [([0, 1, 0, 1, 1, 0], 1.0), ([0, 0, 0, 1, 1], 10.0)])
def test_identity_gram_closed_form(labels, C):
    y = np.array(labels)
    svm = ml.svm_train(np.eye(y.size), y, C=C, kernel="precomputed")
    assert ml.accuracy(svm.predict(np.eye(y.size)), y) == 1.0
    m = svm.machines[0]
    assert m.support.size == y.size
    yy = np.where(y == 0, 1.0, -1.0)
    b = yy.sum() / y.size
    alpha_ref = 1.0 - yy * b
    np.testing.assert_allclose(m.dual_coef, alpha_ref * yy, atol=1e-3)
    assert abs(m.bias - b) < 1e-3


def test_separable_pair():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    svm = ml.svm_train(X, np.array([0, 1]), C=1.0, gamma=1.0)
    np.testing.assert_array_equal(svm.predict(X), [0, 1])


def _three_blobs(rng, n=60):
    centers = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 2.0]])
    y = rng.integers(0, 3, n)
    return centers[y] + 0.6 * rng.standard_normal((n, 2)), y


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0, 5.0]))
def test_dual_feasibility_and_monotone_objective(seed, C):
    X, y = _three_blobs(np.random.default_rng(seed))
    if np.unique(y).size < 2:
        return
    svm = ml.svm_train(X, y, C=C, record_objective=True)
    for m in svm.machines:
        alpha = np.abs(m.dual_coef)
        assert np.all(alpha > 0) and np.all(alpha <= C + 1e-12)
        assert abs(m.dual_coef.sum()) < 1e-6
        assert np.all(np.diff(m.objective) >= -1e-12)


def test_precomputed_path_equals_rbf_path(rng):
    X, y = _three_blobs(rng, 50)
    g = ml.scale_gamma(X)
    direct = ml.svm_train(X, y, gamma=g)
    pre = ml.svm_train(ml.rbf_gram(X, X, g), y, kernel="precomputed")
    np.testing.assert_array_equal(direct.predict(X), pre.predict(ml.rbf_gram(X, X, g)))


def test_ties_go_to_lowest_class():
    decisions = np.array([[1.0, -1.0, 1.0]])  # pairs (0,1),(0,2),(1,2): one vote each
    votes = ml.ovo_votes(decisions, 3)
    np.testing.assert_array_equal(votes, [[1, 1, 1]])
    assert np.argmax(votes[0]) == 0


@settings(max_examples=100)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_score_fraction_never_overturns_votes(dec):
    d = np.array([dec])
    votes = ml.ovo_votes(d, 3)[0]
    scores = ml.ovo_scores(d, 3)[0]
    assert np.all(np.abs(scores - votes) < 1 / 3 + 1e-12)


def test_svm_errors(rng):
    with pytest.raises(ValueError):
        ml.svm_train(rng.normal(size=(5, 2)), np.zeros(5))
    with pytest.raises(ValueError):
        ml.svm_train(np.ones((3, 4)), np.array([0, 1, 0]), kernel="precomputed")
    X, y = _three_blobs(rng, 30)
    svm = ml.svm_train(X, y)
    with pytest.raises(ValueError):
        svm.predict(np.zeros((1, 3)))
    with pytest.raises(ConvergenceError):
        ml.svm_train(X, y, max_iter=2)


def test_accuracy_and_confusion():
    assert ml.accuracy([0, 1, 2, 1], [0, 1, 2, 0]) == 0.75
    assert ml.accuracy([1, 2], [1, 2]) == 1.0
    with pytest.raises(ValueError):
        ml.accuracy([], [])
    M = ml.confusion_counts([0, 1, 2, 1], [0, 1, 2, 0], 3)
    assert M.sum() == 4 and M[0, 1] == 1 and np.trace(M) == 3


def test_model_roundtrip(tmp_path, rng):
    X, y = _three_blobs(rng, 40)
    svm = ml.svm_train(X, y)
    path = tmp_path / "svm.json"
    ml.save_model(svm, path)
    back = ml.load_model(path)
    np.testing.assert_array_equal(back.predict(X), svm.predict(X))
    np.testing.assert_allclose(back.class_scores(X), svm.class_scores(X), atol=1e-13)
