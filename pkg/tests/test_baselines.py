import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qvision.baselines import (
    AdaBoostModel,
    LinearSvmModel,
    RbfSvmModel,
    adaboost_fit,
    linear_svm_fit,
    rbf_kernel,
    rbf_svm_fit,
    scale_gamma,
)
from qvision.errors import ShapeError, TrainError
from qvision.qboost import train_weak_ensemble
from qvision.trees import tree_fit

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1, -1, 1, 1])


def test_linear_1d_separable():
    m = linear_svm_fit(np.array([[-1.0], [1.0]]), np.array([-1, 1]))
    assert m.weights[0] > 0
    assert m.predict(np.array([[-1.0], [1.0]])).tolist() == [-1, 1]


def test_linear_single_class():
    with pytest.raises(TrainError):
        linear_svm_fit(np.ones((3, 1)), np.ones(3))


def test_linear_duplicate_invariance(rng):
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] + X[:, 1] > 0, 1, -1)
    X[:, 0] += y  # wide margin: no bound constraint active at C=10
    probe = np.column_stack([g.ravel() for g in np.meshgrid(np.linspace(-3, 3, 7), np.linspace(-3, 3, 7))])
    a = linear_svm_fit(X, y, C=10.0, tol=1e-10, epochs=20000)
    b = linear_svm_fit(np.vstack([X, X]), np.concatenate([y, y]), C=10.0, tol=1e-10, epochs=20000)
    assert np.abs(a.decision(probe) - b.decision(probe)).max() < 1e-4


def test_linear_predict_examples():
    m = LinearSvmModel(np.array([1.0]), 0.0, 1.0)
    assert m.predict(np.array([[0.5], [-0.5], [0.0]])).tolist() == [1, -1, 1]
    with pytest.raises(ShapeError):
        m.predict(np.ones((2, 2)))


def test_linear_cannot_fit_xor():
    m = linear_svm_fit(XOR_X, XOR_Y)
    assert np.mean(m.predict(XOR_X) == XOR_Y) <= 0.75


def test_gamma_scale_formula():
    X = np.array([[0.0] * 10, [math.sqrt(2)] * 10])  # population variance 0.5
    assert X.var() == pytest.approx(0.5)
    assert scale_gamma(X) == pytest.approx(0.2)
    with pytest.raises(TrainError):
        rbf_svm_fit(np.ones((4, 2)), np.array([1, -1, 1, -1]))


def test_rbf_fits_xor():
    m = rbf_svm_fit(XOR_X, XOR_Y, C=10.0)
    assert np.mean(m.predict(XOR_X) == XOR_Y) == 1.0


@given(st.integers(2, 15), st.integers(1, 5), st.integers(0, 1000))
def test_rbf_gram_valid(S, F, seed):
    X = np.random.default_rng(seed).normal(size=(S, F))
    K = rbf_kernel(X, gamma=0.7)
    assert np.array_equal(K, K.T)
    assert np.abs(np.diag(K) - 1).max() < 1e-12


def test_rbf_predict_matches_naive(rng):
    X = rng.normal(size=(40, 3))
    y = np.where(np.linalg.norm(X, axis=1) > 1.5, 1, -1)
    m = rbf_svm_fit(X, y)
    probe = rng.normal(size=(25, 3))
    naive = []
    for p in probe:
        s = m.bias
        for c, sv in zip(m.dual_coef, m.support_vectors):
            s += c * math.exp(-m.gamma * sum((p[k] - sv[k]) ** 2 for k in range(3)))
        naive.append(1 if s >= 0 else -1)
    assert m.predict(probe).tolist() == naive
    assert m.gamma > 0


def test_adaboost_single_stage_perfect_stump():
    X = np.arange(6.0)[:, None]
    y = np.array([-1, -1, -1, 1, 1, 1])
    m = adaboost_fit(X, y, n_estimators=1)
    assert np.mean(m.predict(X) != y) == 0
    assert np.array_equal(m.predict(X), m.trees[0].predict(X))


def test_adaboost_interleaved_error_decreases():
    X = np.arange(8.0)[:, None]
    y = np.array([1, 1, -1, -1, -1, 1, 1, -1])  # three sign switches need three stumps
    errors = [np.mean(adaboost_fit(X, y, n_estimators=k).predict(X) != y) for k in (1, 2, 3)]
    assert errors[0] > errors[1] > errors[2]


@pytest.mark.parametrize("n", [10, 50])
def test_adaboost_grid_sizes(rng, n):
    X = rng.normal(size=(60, 3))
    y = np.where(X[:, 0] > 0, 1, -1)
    y[:5] *= -1
    assert adaboost_fit(X, y, n_estimators=n).n_stages == n


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_adaboost_shares_boosting_loop_and_bound(seed, depth):
    r = np.random.default_rng(seed)
    X = r.normal(size=(50, 3))
    y = np.where(X[:, 0] + 0.7 * r.normal(size=50) > 0, 1, -1)
    if len(np.unique(y)) < 2:
        return
    m = adaboost_fit(X, y, 6, depth, seed)
    ens = train_weak_ensemble(X, y, 6, depth, seed)
    assert [json.dumps(t.to_dict()) for t in m.trees] == [json.dumps(t.to_dict()) for t in ens.trees]
    assert m.weights.tobytes() == ens.weights.tobytes()
    bound = np.prod(2 * np.sqrt(ens.errors * (1 - ens.errors)))
    assert np.mean(m.predict(X) != y) <= bound + 1e-12
    assert np.all(np.isfinite(m.weights))


def test_adaboost_single_class():
    with pytest.raises(TrainError):
        adaboost_fit(np.zeros((3, 1)), np.ones(3, dtype=int), 2)


def test_models_json_roundtrip(rng):
    X = rng.normal(size=(40, 2))
    y = np.where(X[:, 0] > 0, 1, -1)
    for model, cls in ((linear_svm_fit(X, y), LinearSvmModel), (rbf_svm_fit(X, y), RbfSvmModel),
                       (adaboost_fit(X, y, 4), AdaBoostModel)):
        back = cls.from_dict(json.loads(json.dumps(model.to_dict())))
        assert np.array_equal(back.predict(X), model.predict(X))


def test_fits_deterministic(rng):
    X = rng.normal(size=(40, 3))
    y = np.where(X[:, 1] > 0, 1, -1)
    assert np.array_equal(linear_svm_fit(X, y, seed=2).weights, linear_svm_fit(X, y, seed=2).weights)
    assert np.array_equal(rbf_svm_fit(X, y, seed=2).dual_coef, rbf_svm_fit(X, y, seed=2).dual_coef)


def test_adaboost_single_stage_equals_tree(rng):
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] > 0.2, 1, -1)
    m = adaboost_fit(X, y, 1, depth=2)
    assert np.array_equal(m.predict(X), tree_fit(X, y, max_depth=2).predict(X))
