import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qvision.errors import CapacityError, ShapeError, TrainError
from qvision.qkernel import (
    FeatureMapSpec,
    SvmModel,
    dual_objective,
    feature_map_state,
    kernel_entry,
    kernel_matrix,
    load_gram,
    save_gram,
    svm_decision,
    svm_predict,
    svm_train_precomputed,
    walsh_hadamard,
)

angles = st.floats(0, math.pi, allow_nan=False)


def dense_state(x, reps=2, pairs=None):
    """Oracle: explicit 2^n x 2^n Hadamard and diagonal phase matrices."""
    n = len(x)
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    Hn = np.array([[1.0]])
    for _ in range(n):
        Hn = np.kron(h, Hn)
    pairs = list(itertools.combinations(range(n), 2)) if pairs is None else pairs
    phases = []
    for b in range(2 ** n):
        z = [(-1) ** ((b >> i) & 1) for i in range(n)]
        a = sum(x[i] * z[i] for i in range(n))
        a += sum((math.pi - x[i]) * (math.pi - x[j]) * z[i] * z[j] for i, j in pairs)
        phases.append(np.exp(1j * a))
    U = np.diag(phases) @ Hn
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1
    for _ in range(reps):
        psi = U @ psi
    return psi


def test_zero_input_single_qubit():
    s = feature_map_state([0.0], FeatureMapSpec(1, reps=1))
    assert np.allclose(s, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-12)


@pytest.mark.parametrize("n,reps", [(2, 1), (2, 2), (3, 2), (4, 3)])
def test_dense_oracle(rng, n, reps):
    for _ in range(5):
        x = rng.uniform(0, math.pi, n)
        assert np.abs(feature_map_state(x, FeatureMapSpec(n, reps)) - dense_state(x, reps)).max() < 1e-12


def test_dense_oracle_custom_pairs(rng):
    x = rng.uniform(0, math.pi, 4)
    spec = FeatureMapSpec(4, reps=2, pairs=((0, 3), (1, 2)))
    assert np.abs(feature_map_state(x, spec) - dense_state(x, 2, [(0, 3), (1, 2)])).max() < 1e-12


@given(st.lists(angles, min_size=1, max_size=6), st.integers(1, 3))
def test_state_normalized(x, reps):
    s = feature_map_state(x, FeatureMapSpec(len(x), reps))
    assert abs(np.vdot(s, s).real - 1) < 1e-10


@given(st.integers(1, 8), st.integers(0, 1000))
def test_walsh_hadamard_self_inverse(n, seed):
    r = np.random.default_rng(seed)
    v = r.normal(size=2 ** n) + 1j * r.normal(size=2 ** n)
    assert np.abs(walsh_hadamard(walsh_hadamard(v)) - v).max() < 1e-12


@given(angles, angles)
def test_single_qubit_closed_form(a, b):
    assert abs(kernel_entry([a], [b], FeatureMapSpec(1, reps=1)) - math.cos(a - b) ** 2) < 1e-10


def test_orthogonal_pair():
    assert kernel_entry([0.0], [math.pi / 2], FeatureMapSpec(1, reps=1)) < 1e-10


@given(st.lists(angles, min_size=3, max_size=3), st.lists(angles, min_size=3, max_size=3))
def test_kernel_symmetry_and_self(x1, x2):
    spec = FeatureMapSpec(3)
    assert abs(kernel_entry(x1, x1, spec) - 1) < 1e-10
    assert abs(kernel_entry(x1, x2, spec) - kernel_entry(x2, x1, spec)) < 1e-12
    assert -1e-12 <= kernel_entry(x1, x2, spec) <= 1 + 1e-12


def test_global_phase_invariance(rng):
    spec = FeatureMapSpec(3)
    a, b = (feature_map_state(rng.uniform(0, math.pi, 3), spec) for _ in range(2))
    k = abs(np.vdot(a, b)) ** 2
    assert abs(abs(np.vdot(a * np.exp(0.7j), b)) ** 2 - k) < 1e-12


def test_kernel_matrix_single_row():
    assert np.allclose(kernel_matrix([[0.3, 1.2]]), [[1.0]])


def test_kernel_matrix_matches_entries(rng):
    spec = FeatureMapSpec(4)
    A, B = rng.uniform(0, math.pi, (6, 4)), rng.uniform(0, math.pi, (5, 4))
    K = kernel_matrix(A, B, spec=spec)
    naive = np.array([[kernel_entry(a, b, spec) for b in B] for a in A])
    assert np.abs(K - naive).max() < 1e-12


@given(st.integers(2, 6), st.integers(2, 20), st.integers(0, 1000))
def test_gram_valid(n, S, seed):
    X = np.random.default_rng(seed).uniform(0, math.pi, (S, n))
    K = kernel_matrix(X)
    assert np.array_equal(K, K.T)
    assert np.abs(np.diag(K) - 1).max() < 1e-10
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_capacity_and_shape_errors():
    with pytest.raises(CapacityError):
        kernel_matrix(np.zeros((2, 25)))
    with pytest.raises(ShapeError):
        kernel_matrix(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        feature_map_state([0.1, 0.2], FeatureMapSpec(3))


def test_gram_file_roundtrip(tmp_path, rng):
    K = rng.random((3, 5))
    save_gram(K, tmp_path / "g.bin")
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:16] == (3).to_bytes(8, "little") + (5).to_bytes(8, "little")
    assert len(raw) == 16 + 8 * 15
    assert np.array_equal(load_gram(tmp_path / "g.bin"), K)


# -- SVM ---------------------------------------------------------------------


def _blocks():
    y = np.array([1, 1, -1, -1])
    K = np.eye(4) * 0.9 + 0.1
    K[:2, :2] += 0.05
    K[2:, 2:] += 0.05
    np.fill_diagonal(K, 1.0)
    return K, y


def test_block_kernel_fit_and_grid_oracle():
    K, y = _blocks()
    m = svm_train_precomputed(K, y, C=1.0, tol=1e-6)
    assert np.array_equal(svm_predict(m, K), y)
    grid = [a for a in itertools.product([0, 0.5, 1.0], repeat=4) if abs(np.dot(a, y)) < 1e-12]
    best_grid = max(dual_objective(np.array(a), y, K) for a in grid)
    assert dual_objective(m.alpha, y, K) >= best_grid - 1e-6


def _separable(rng, S=30):
    X = rng.normal(size=(S, 2))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1, -1)
    X[:, 0] += 0.6 * y
    return X, y


def _rbf(A, B, gamma=0.5):
    d = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d)


def test_dual_feasibility_and_monotone_objective(rng):
    X, y = _separable(rng)
    m = svm_train_precomputed(_rbf(X, X), y, C=1.0)
    assert np.all(m.alpha >= 0) and np.all(m.alpha <= 1.0 + 1e-12)
    assert abs(m.dual_coef.sum()) < 1e-6
    h = np.array(m.objective_history)
    assert np.all(np.diff(h) >= -1e-10 * (1 + np.abs(h[1:])))


def test_duplicated_dataset_same_decision(rng):
    X, y = _separable(rng, 20)
    probe = rng.normal(size=(15, 2))
    C = 1e3  # no bound constraint is active, so duplication changes nothing
    m1 = svm_train_precomputed(_rbf(X, X), y, C=C, tol=1e-9, max_passes=5)
    X2, y2 = np.vstack([X, X]), np.concatenate([y, y])
    m2 = svm_train_precomputed(_rbf(X2, X2), y2, C=C, tol=1e-9, max_passes=5)
    assert m1.alpha.max() < C / 2
    d1 = svm_decision(m1, _rbf(probe, X))
    d2 = svm_decision(m2, _rbf(probe, X2))
    assert np.abs(d1 - d2).max() < 1e-6


def test_label_flip_negates_decision(rng):
    X, y = _separable(rng)
    K = _rbf(X, X)
    probe = _rbf(rng.normal(size=(10, 2)), X)
    a = svm_decision(svm_train_precomputed(K, y, seed=3), probe)
    b = svm_decision(svm_train_precomputed(K, -y, seed=3), probe)
    assert np.allclose(a, -b, atol=1e-8)


def test_predict_sign_zero_and_bias_only():
    m = SvmModel(dual_coef=np.zeros(3), bias=0.3, C=1.0)
    assert svm_predict(m, np.ones((4, 3))).tolist() == [1] * 4
    m0 = SvmModel(dual_coef=np.zeros(3), bias=0.0, C=1.0)
    assert svm_predict(m0, np.ones((2, 3))).tolist() == [1, 1]
    with pytest.raises(ShapeError):
        svm_predict(m, np.ones((2, 4)))


def test_svm_errors():
    with pytest.raises(TrainError):
        svm_train_precomputed(np.eye(3), np.ones(3))
    K = np.eye(3)
    K[0, 1] = 0.5
    with pytest.raises(ShapeError):
        svm_train_precomputed(K, np.array([1, -1, 1]))


def test_svm_deterministic(rng):
    X, y = _separable(rng)
    K = _rbf(X, X)
    a, b = svm_train_precomputed(K, y, seed=4), svm_train_precomputed(K, y, seed=4)
    assert np.array_equal(a.dual_coef, b.dual_coef) and a.bias == b.bias


def test_quantum_kernel_svm_learns(rng):
    X = rng.uniform(0, math.pi, (40, 3))
    y = np.where(np.cos(X[:, 0] - X[:, 1]) > 0, 1, -1)
    K = kernel_matrix(X)
    m = svm_train_precomputed(K, y, C=10.0)
    assert np.mean(svm_predict(m, K) == y) >= 0.9
