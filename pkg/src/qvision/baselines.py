"""Classical reference classifiers: linear SVM, RBF-kernel SVM and AdaBoost.

All predictors map a zero decision value to +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, TrainError
from .qboost import train_weak_ensemble
from .qkernel import svm_train_precomputed
from .trees import DecisionTree


def _labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise ShapeError("labels must be a 1-D array of -1/+1")
    if len(np.unique(y)) < 2:
        raise TrainError("training labels contain a single class")
    return y.astype(np.float64)


def _matrix(X, n_features: int | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def _sign(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, 1, -1)


# ---------------------------------------------------------------------------
# Linear SVM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    C: float

    def decision(self, X) -> np.ndarray:
        return _matrix(X, self.weights.shape[0]) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return _sign(self.decision(X))

    def to_dict(self) -> dict:
        return {"kind": "linsvm", "weights": self.weights.tolist(), "bias": self.bias, "C": self.C}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSvmModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["bias"]), float(d["C"]))


def linear_svm_fit(
    X, y, C: float = 1.0, epochs: int = 1000, tol: float = 1e-4, seed: int = 0
) -> LinearSvmModel:
    """Hinge-loss linear SVM by dual coordinate descent.

    The bias is learned as the weight of an appended constant feature (so
    it is regularized, as in liblinear). Each epoch visits samples in a
    seeded random order; training stops once an epoch's largest dual
    coordinate change drops below ``tol``.
    """
    X = _matrix(X)
    y = _labels(y)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, y has {y.shape[0]} labels")
    if C <= 0:
        raise ConfigError("C must be positive")
    S, F = X.shape
    Xa = np.hstack([X, np.ones((S, 1))])
    qii = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(S)
    w = np.zeros(F + 1)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        max_change = 0.0
        for i in rng.permutation(S):
            if qii[i] <= 0:
                continue
            G = y[i] * (w @ Xa[i]) - 1.0
            a = alpha[i]
            a_new = min(max(a - G / qii[i], 0.0), C)
            if a_new != a:
                w += (a_new - a) * y[i] * Xa[i]
                alpha[i] = a_new
                max_change = max(max_change, abs(a_new - a))
        if max_change < tol:
            break
    return LinearSvmModel(weights=w[:F].copy(), bias=float(w[F]), C=float(C))


# ---------------------------------------------------------------------------
# RBF SVM
# ---------------------------------------------------------------------------


def scale_gamma(X) -> float:
    """``1 / (n_features * X.var())`` with the population variance of all entries."""
    X = _matrix(X)
    var = float(X.var())
    if var <= 0:
        raise TrainError("gamma='scale' is undefined for zero-variance data")
    return 1.0 / (X.shape[1] * var)


def rbf_kernel(X_a, X_b=None, gamma: float = 1.0) -> np.ndarray:
    X_a = _matrix(X_a)
    square = X_b is None
    X_b = X_a if square else _matrix(X_b, X_a.shape[1])
    sq = (
        np.einsum("ij,ij->i", X_a, X_a)[:, None]
        + np.einsum("ij,ij->i", X_b, X_b)[None, :]
        - 2.0 * X_a @ X_b.T
    )
    K = np.exp(-gamma * np.clip(sq, 0.0, None))
    if square:
        K = np.triu(K, 1)
        K = K + K.T
        np.fill_diagonal(K, 1.0)
    return K


@dataclass(frozen=True)
class RbfSvmModel:
    dual_coef: np.ndarray        # alpha_s * y_s of the support vectors
    bias: float
    support_vectors: np.ndarray  # (n_sv, features)
    gamma: float
    C: float

    def decision(self, X) -> np.ndarray:
        K = rbf_kernel(_matrix(X, self.support_vectors.shape[1]), self.support_vectors, self.gamma)
        return K @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return _sign(self.decision(X))

    def to_dict(self) -> dict:
        return {
            "kind": "rbfsvm",
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "gamma": self.gamma,
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RbfSvmModel":
        return cls(
            dual_coef=np.asarray(d["dual_coef"], dtype=np.float64),
            bias=float(d["bias"]),
            support_vectors=np.asarray(d["support_vectors"], dtype=np.float64),
            gamma=float(d["gamma"]),
            C=float(d["C"]),
        )


def rbf_svm_fit(
    X, y, C: float = 1.0, gamma: float | str = "scale", tol: float = 1e-3, seed: int = 0
) -> RbfSvmModel:
    X = _matrix(X)
    y = _labels(y)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, y has {y.shape[0]} labels")
    if gamma == "scale":
        gamma = scale_gamma(X)
    elif isinstance(gamma, str) or gamma <= 0:
        raise ConfigError(f"gamma must be 'scale' or positive, got {gamma!r}")
    svm = svm_train_precomputed(rbf_kernel(X, gamma=gamma), y, C=C, tol=tol, seed=seed)
    sv = svm.support
    return RbfSvmModel(
        dual_coef=svm.dual_coef[sv].copy(),
        bias=svm.bias,
        support_vectors=X[sv].copy(),
        gamma=float(gamma),
        C=float(C),
    )


# ---------------------------------------------------------------------------
# AdaBoost
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaBoostModel:
    trees: tuple[DecisionTree, ...]
    weights: np.ndarray

    @property
    def n_stages(self) -> int:
        return len(self.trees)

    def decision(self, X) -> np.ndarray:
        X = _matrix(X)
        out = np.zeros(X.shape[0])
        for tree, w in zip(self.trees, self.weights):
            out += w * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return _sign(self.decision(X))

    def to_dict(self) -> dict:
        return {
            "kind": "adaboost",
            "trees": [t.to_dict() for t in self.trees],
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaBoostModel":
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            weights=np.asarray(d["weights"], dtype=np.float64),
        )


def adaboost_fit(X, y, n_estimators: int = 50, depth: int = 1, seed: int = 0) -> AdaBoostModel:
    """Discrete AdaBoost over weighted CART trees (same loop as QBoost's)."""
    _labels(y)
    ens = train_weak_ensemble(X, y, n_estimators, depth, seed)
    return AdaBoostModel(trees=ens.trees, weights=ens.weights.copy())
