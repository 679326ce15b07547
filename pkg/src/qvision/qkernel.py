"""Statevector simulation of the ZZ feature map, quantum-kernel Gram
matrices, and an SMO solver for the soft-margin SVM dual on a precomputed
kernel.

Basis-state layout is little-endian: qubit ``i`` is bit ``i`` of the
amplitude index. One feature-map layer applies the normalized
Walsh-Hadamard transform followed by the diagonal phase

    exp(i * [sum_i x_i z_i + sum_{(i,j)} (pi - x_i)(pi - x_j) z_i z_j]),
    z_i = (-1)^{b_i},

and ``reps`` layers are stacked. Features are expected in ``[0, pi]``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigError, IoError, ShapeError, TrainError

MAX_QUBITS = 24


@dataclass(frozen=True)
class FeatureMapSpec:
    n: int
    reps: int = 2
    pairs: tuple[tuple[int, int], ...] | None = None  # None -> all unordered pairs

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("feature map needs at least one qubit")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.pairs is not None:
            pairs = tuple(tuple(sorted((int(i), int(j)))) for i, j in self.pairs)
            for i, j in pairs:
                if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                    raise ConfigError(f"invalid qubit pair ({i}, {j}) for n={self.n}")
            object.__setattr__(self, "pairs", pairs)

    @property
    def full(self) -> bool:
        return self.pairs is None

    def pair_list(self) -> tuple[tuple[int, int], ...]:
        return tuple(combinations(range(self.n), 2)) if self.pairs is None else self.pairs


def walsh_hadamard(state: np.ndarray) -> np.ndarray:
    """Normalized n-qubit Walsh-Hadamard transform (H on every qubit).

    Butterfly over each qubit axis in place on a copy; O(n 2^n).
    """
    out = np.array(state, dtype=np.complex128, copy=True)
    size = out.shape[0]
    n = size.bit_length() - 1
    if size != 1 << n:
        raise ShapeError(f"state length {size} is not a power of two")
    inv = 1.0 / np.sqrt(2.0)
    for q in range(n):
        view = out.reshape(-1, 2, 1 << q)
        a = view[:, 0, :].copy()
        b = view[:, 1, :]
        view[:, 0, :] = (a + b) * inv
        view[:, 1, :] = (a - b) * inv
    return out


@lru_cache(maxsize=8)
def _z_signs(n: int) -> np.ndarray:
    """(2^n, n) matrix with entry (b, i) = (-1)^{bit i of b}."""
    b = np.arange(1 << n, dtype=np.int64)[:, None]
    bits = (b >> np.arange(n, dtype=np.int64)[None, :]) & 1
    out = (1 - 2 * bits).astype(np.float64)
    out.setflags(write=False)
    return out


def phase_angles(x: np.ndarray, spec: FeatureMapSpec) -> np.ndarray:
    """Exponent of the diagonal phase for every basis state."""
    z = _z_signs(spec.n)
    angles = z @ x
    a = np.pi - x
    if spec.full:
        # sum_{i<j} a_i a_j z_i z_j = ((sum a_i z_i)^2 - sum a_i^2) / 2
        s = z @ a
        angles = angles + 0.5 * (s * s - np.dot(a, a))
    else:
        for i, j in spec.pairs:
            angles = angles + a[i] * a[j] * (z[:, i] * z[:, j])
    return angles


def feature_map_state(x, spec: FeatureMapSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != spec.n:
        raise ShapeError(f"feature row has {x.shape[0]} entries, map has {spec.n} qubits")
    if spec.n > MAX_QUBITS:
        raise CapacityError(f"{spec.n} qubits exceeds the statevector cap of {MAX_QUBITS}")
    phase = np.exp(1j * phase_angles(x, spec))
    state = np.zeros(1 << spec.n, dtype=np.complex128)
    state[0] = 1.0
    for _ in range(spec.reps):
        state = phase * walsh_hadamard(state)
    return state


def kernel_entry(x1, x2, spec: FeatureMapSpec) -> float:
    overlap = np.vdot(feature_map_state(x1, spec), feature_map_state(x2, spec))
    return float(abs(overlap) ** 2)


def _states(X: np.ndarray, spec: FeatureMapSpec) -> np.ndarray:
    return np.stack([feature_map_state(row, spec) for row in X])


def kernel_matrix(X_a, X_b=None, spec: FeatureMapSpec | None = None, reps: int = 2) -> np.ndarray:
    """Quantum-kernel Gram matrix ``K[a, b] = |<psi(x_a)|psi(x_b)>|^2``.

    With ``X_b`` omitted the square matrix over ``X_a`` is built from its
    upper triangle and mirrored, so it is exactly symmetric.
    """
    X_a = np.atleast_2d(np.asarray(X_a, dtype=np.float64))
    square = X_b is None
    X_b = X_a if square else np.atleast_2d(np.asarray(X_b, dtype=np.float64))
    if X_a.shape[1] != X_b.shape[1]:
        raise ShapeError(f"feature counts differ: {X_a.shape[1]} vs {X_b.shape[1]}")
    if spec is None:
        spec = FeatureMapSpec(n=X_a.shape[1], reps=reps)
    if spec.n != X_a.shape[1]:
        raise ShapeError(f"map has {spec.n} qubits, data has {X_a.shape[1]} features")
    if spec.n > MAX_QUBITS:
        raise CapacityError(f"{spec.n} qubits exceeds the statevector cap of {MAX_QUBITS}")
    A = _states(X_a, spec)
    if square:
        K = np.abs(A.conj() @ A.T) ** 2
        upper = np.triu(K)
        return upper + np.triu(K, 1).T
    B = _states(X_b, spec)
    return np.abs(A.conj() @ B.T) ** 2


def save_gram(K: np.ndarray, path: str | os.PathLike) -> None:
    """Header ``<rows><cols>`` as little-endian uint64, then float64 row-major."""
    K = np.ascontiguousarray(K, dtype="<f8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", *K.shape))
            fh.write(K.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_gram(path: str | os.PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    rows, cols = struct.unpack("<QQ", data[:16])
    if len(data) != 16 + 8 * rows * cols:
        raise ShapeError(f"{path}: payload does not match header {rows}x{cols}")
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# SVM on a precomputed kernel
# ---------------------------------------------------------------------------


@dataclass
class SvmModel:
    dual_coef: np.ndarray        # alpha_s * y_s for every training sample
    bias: float
    C: float
    objective_history: list = field(default_factory=list)

    @property
    def alpha(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.dual_coef != 0)

    def to_dict(self) -> dict:
        return {"dual_coef": self.dual_coef.tolist(), "bias": self.bias, "C": self.C}

    @classmethod
    def from_dict(cls, data: dict) -> "SvmModel":
        return cls(np.asarray(data["dual_coef"], dtype=np.float64), float(data["bias"]), float(data["C"]))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise ShapeError("labels must be a 1-D array of -1/+1")
    if len(np.unique(y)) < 2:
        raise TrainError("training labels contain a single class")
    return y.astype(np.float64)


def svm_train_precomputed(
    K,
    y,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 50,
    seed: int = 0,
    max_sweeps: int = 10_000,
) -> SvmModel:
    """Soft-margin SVM dual by sequential minimal optimization.

    Each sweep visits samples in a seeded random order; a sample violating
    the KKT conditions by more than ``tol`` is paired with the partner that
    maximises ``|E_i - E_j|`` (falling back to the remaining samples in
    seeded order when that pair cannot move). Training stops after
    ``max_passes`` consecutive sweeps without any update, or immediately
    when a sweep finds no violator. The bias is averaged over margin
    support vectors.
    """
    K = np.asarray(K, dtype=np.float64)
    y = _check_labels(y)
    S = y.shape[0]
    if K.shape != (S, S):
        raise ShapeError(f"kernel shape {K.shape} does not match {S} labels")
    if not np.allclose(K, K.T, atol=1e-8, rtol=0):
        raise ShapeError("kernel matrix is not symmetric")
    if C <= 0:
        raise ConfigError("C must be positive")

    rng = np.random.default_rng(seed)
    alpha = np.zeros(S)
    b = 0.0
    E = -y.copy()  # f(x) - y with f = 0
    eps = 1e-12
    history = [0.0]

    def take_step(i: int, j: int) -> bool:
        nonlocal b
        if i == j:
            return False
        ai, aj, yi, yj = alpha[i], alpha[j], y[i], y[j]
        if yi != yj:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L < eps:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= eps:
            return False
        aj_new = min(H, max(L, aj + yj * (E[i] - E[j]) / eta))
        if abs(aj_new - aj) < eps * (aj_new + aj + eps):
            return False
        ai_new = ai + yi * yj * (aj - aj_new)
        ai_new = min(C, max(0.0, ai_new))
        di, dj = ai_new - ai, aj_new - aj
        b1 = b - E[i] - yi * di * K[i, i] - yj * dj * K[i, j]
        b2 = b - E[j] - yi * di * K[i, j] - yj * dj * K[j, j]
        if 0 < ai_new < C:
            b_new = b1
        elif 0 < aj_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        E[:] += yi * di * K[i] + yj * dj * K[j] + (b_new - b)
        alpha[i], alpha[j], b = ai_new, aj_new, b_new
        return True

    def violates(i: int) -> bool:
        r = E[i] * y[i]
        return (r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)

    quiet = 0
    for _ in range(max_sweeps):
        changed = 0
        any_violation = False
        for i in rng.permutation(S):
            if not violates(i):
                continue
            any_violation = True
            j = int(np.argmax(np.abs(E - E[i])))
            if take_step(i, j):
                changed += 1
                continue
            start = int(rng.integers(S))
            for j in np.roll(np.arange(S), -start):
                if take_step(i, int(j)):
                    changed += 1
                    break
        history.append(dual_objective(alpha, y, K))
        if not any_violation:
            break
        quiet = quiet + 1 if changed == 0 else 0
        if quiet >= max_passes:
            break

    margin = (alpha > 1e-8 * C) & (alpha < C * (1 - 1e-8))
    f_nobias = K @ (alpha * y)
    if margin.any():
        bias = float(np.mean(y[margin] - f_nobias[margin]))
    else:
        # no free support vectors: midpoint of the feasible bias interval
        g = y - f_nobias
        lower = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        upper = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        lo = g[lower].max() if lower.any() else g.min()
        hi = g[upper].min() if upper.any() else g.max()
        bias = float(0.5 * (lo + hi))
    return SvmModel(dual_coef=alpha * y, bias=bias, C=float(C), objective_history=history)


def svm_decision(model: SvmModel, K_test) -> np.ndarray:
    K_test = np.atleast_2d(np.asarray(K_test, dtype=np.float64))
    if K_test.shape[1] != model.dual_coef.shape[0]:
        raise ShapeError(
            f"test kernel has {K_test.shape[1]} columns, model has {model.dual_coef.shape[0]} training samples"
        )
    return K_test @ model.dual_coef + model.bias


def svm_predict(model: SvmModel, K_test) -> np.ndarray:
    return np.where(svm_decision(model, K_test) >= 0, 1, -1)
