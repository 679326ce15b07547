"""Principal component analysis sized for images with far more pixels than
samples: when ``S < features`` the eigenproblem is solved on the ``S x S``
Gram matrix of centred rows and mapped back (snapshot method)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, NumericalError, ShapeError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # (features,)
    components: np.ndarray    # (k, features), orthonormal rows
    eigenvalues: np.ndarray   # (k,), descending, population covariance

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "header": {"k": self.k, "n_features": self.n_features},
            "mean": self.mean.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "components": self.components.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        k, n = data["header"]["k"], data["header"]["n_features"]
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            components=np.asarray(data["components"], dtype=np.float64).reshape(k, n),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=np.float64),
        )

    def save(self, path: str | os.PathLike) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PcaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _eigh_desc(M: np.ndarray):
    try:
        vals, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    return vals[::-1], vecs[:, ::-1]


def pca_fit(X, k: int, method: str = "auto") -> PcaModel:
    """Fit the top-``k`` principal directions.

    ``method`` is ``"gram"``, ``"covariance"`` or ``"auto"`` (Gram whenever
    there are fewer samples than features).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    S, F = X.shape
    if not (1 <= k <= min(S - 1, F)):
        raise ShapeError(f"k={k} out of range [1, {min(S - 1, F)}]")
    if method == "auto":
        method = "gram" if S < F else "covariance"
    mean = X.mean(axis=0)
    Xc = X - mean

    if method == "gram":
        vals, vecs = _eigh_desc(Xc @ Xc.T)
        vals, vecs = vals[:k], vecs[:, :k]
        comps = (Xc.T @ vecs).T
        norms = np.linalg.norm(comps, axis=1)
        if np.any(norms <= 0):
            raise NumericalError("zero-variance direction requested; reduce k")
        comps /= norms[:, None]
        eigenvalues = np.clip(vals, 0.0, None) / S
    elif method == "covariance":
        vals, vecs = _eigh_desc(Xc.T @ Xc / S)
        comps = vecs[:, :k].T.copy()
        eigenvalues = np.clip(vals[:k], 0.0, None)
    else:
        raise ValueError(f"unknown PCA method {method!r}")
    return PcaModel(mean=mean, components=_fix_signs(comps), eigenvalues=eigenvalues)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, Z) -> np.ndarray:
    return np.asarray(Z, dtype=np.float64) @ model.components + model.mean
