"""QBoost: AdaBoost-style weak-learner generation, QUBO assembly for binary
classifier selection, exhaustive and simulated-annealing QUBO solvers,
threshold post-processing and the strong classifier.

QUBO matrices are upper triangular and the energy of a bitstring ``w`` is
``sum_{i<=j} Q[i, j] w_i w_j``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateModelError,
    EncodingError,
    IoError,
    ShapeError,
    TrainError,
)
from .trees import DecisionTree, tree_fit

EPS_CLAMP = 1e-10
EXHAUSTIVE_MAX_BITS = 25
QUBO_MODES = ("consistent", "paper-exact")
THRESHOLD_MODES = ("paper", "sweep")


# ---------------------------------------------------------------------------
# Weak learners
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeakEnsemble:
    trees: tuple[DecisionTree, ...]
    weights: np.ndarray   # AdaBoost stage weights w_i
    H: np.ndarray         # (S, N) training outputs, entries +/-1
    errors: np.ndarray    # clamped weighted errors eps_i
    depth: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _check_binary_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise ShapeError("labels must be a 1-D array of -1/+1")
    if len(np.unique(y)) < 2:
        raise TrainError("training labels contain a single class")
    return y.astype(np.int64)


def train_weak_ensemble(X, y, n_trees: int, depth: int, seed: int = 0) -> WeakEnsemble:
    """Sequentially fit ``n_trees`` weighted trees, AdaBoost style.

    Starting from uniform sample weights, each round fits a tree, computes
    its weighted error (clamped to ``[1e-10, 1 - 1e-10]``), assigns it the
    weight ``0.5 * ln((1 - eps) / eps)`` and re-weights samples by
    ``exp(-w * y * h(x))``, renormalized. Stages with ``eps >= 0.5`` keep
    their (non-positive) weight and boosting continues.

    ``seed`` is accepted for interface symmetry; CART fitting here is fully
    deterministic, so it does not influence the result.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _check_binary_labels(y)
    if n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"X shape {X.shape} does not match {y.shape[0]} labels")
    S = X.shape[0]
    D = np.full(S, 1.0 / S)
    trees, weights, errors, outputs = [], [], [], []
    for _ in range(n_trees):
        tree = tree_fit(X, y, D, max_depth=depth)
        h = tree.predict(X)
        eps = float(np.clip(D[h != y].sum(), EPS_CLAMP, 1.0 - EPS_CLAMP))
        w = 0.5 * math.log((1.0 - eps) / eps)
        D = D * np.exp(-w * y * h)
        D = D / D.sum()
        trees.append(tree)
        weights.append(w)
        errors.append(eps)
        outputs.append(h)
    return WeakEnsemble(
        trees=tuple(trees),
        weights=np.asarray(weights),
        H=np.column_stack(outputs).astype(np.int64),
        errors=np.asarray(errors),
        depth=int(depth),
    )


def ensemble_outputs(trees, X) -> np.ndarray:
    """(samples, trees) matrix of +/-1 tree outputs."""
    X = np.asarray(X, dtype=np.float64)
    return np.column_stack([t.predict(X) for t in trees]).astype(np.int64)


# ---------------------------------------------------------------------------
# QUBO
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuboMatrix:
    Q: np.ndarray    # (N, N) upper triangular
    mode: str = "consistent"
    lam: float = 0.0

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def symmetric(self) -> np.ndarray:
        """Symmetric off-diagonal couplings (zero diagonal)."""
        off = np.triu(self.Q, 1)
        return off + off.T

    def to_text(self) -> str:
        lines = [f"{self.n} {self.mode} {self.lam!r}"]
        rows, cols = np.nonzero(np.triu(self.Q))
        for i, j in zip(rows, cols):
            lines.append(f"{i} {j} {float(self.Q[i, j])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuboMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise EncodingError("empty QUBO file")
        head = lines[0].split()
        if len(head) != 3:
            raise EncodingError("QUBO header must be 'N mode lambda'")
        n, mode, lam = int(head[0]), head[1], float(head[2])
        Q = np.zeros((n, n))
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if len(parts) != 3:
                raise EncodingError(f"line {lineno}: expected 'i j value'")
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            if not (0 <= i <= j < n):
                raise EncodingError(f"line {lineno}: ({i}, {j}) is not an upper-triangular index")
            Q[i, j] = v
        return cls(Q=Q, mode=mode, lam=lam)

    def save(self, path: str | os.PathLike) -> None:
        try:
            Path(path).write_text(self.to_text())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "QuboMatrix":
        return cls.from_text(Path(path).read_text())


def build_qubo(H, y, lam: float, mode: str = "consistent") -> QuboMatrix:
    """Classifier-selection QUBO.

    ``consistent`` is the exact expansion of
    ``sum_s ((1/N) sum_i w_i h_i(x_s) - y_s)^2 + lam * |w|`` minus the
    constant ``S``. ``paper-exact`` keeps ``S/N^2`` on the diagonal but drops
    the ``1/N`` and ``1/N^2`` factors on the correlation terms.
    """
    H = np.asarray(H)
    y = np.asarray(y)
    if H.ndim != 2:
        raise EncodingError(f"H must be 2-D, got shape {H.shape}")
    if not np.all(np.isin(H, (-1, 1))):
        raise EncodingError("H entries must be -1 or +1")
    if not np.all(np.isin(y, (-1, 1))) or y.shape != (H.shape[0],):
        raise EncodingError("y must hold one -1/+1 label per row of H")
    if mode not in QUBO_MODES:
        raise ConfigError(f"unknown QUBO mode {mode!r}")
    S, N = H.shape
    Hf = H.astype(np.float64)
    corr_hh = Hf.T @ Hf
    corr_hy = Hf.T @ y.astype(np.float64)
    if mode == "consistent":
        diag = S / N**2 + lam - (2.0 / N) * corr_hy
        off = (2.0 / N**2) * corr_hh
    else:
        diag = S / N**2 + lam - 2.0 * corr_hy
        off = 2.0 * corr_hh
    Q = np.triu(off, 1)
    Q[np.diag_indices(N)] = diag
    return QuboMatrix(Q=Q, mode=mode, lam=float(lam))


def qubo_energy(qubo: QuboMatrix | np.ndarray, w) -> float:
    Q = qubo.Q if isinstance(qubo, QuboMatrix) else np.asarray(qubo, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != Q.shape[0]:
        raise ShapeError(f"bitstring length {w.shape[0]} does not match QUBO dimension {Q.shape[0]}")
    return float(w @ np.triu(Q) @ w)


@dataclass(frozen=True)
class BinarySolution:
    w: np.ndarray
    energy: float
    solver: str
    seed: int | None = None

    @property
    def n_selected(self) -> int:
        return int(self.w.sum())


Sampler = Callable[[QuboMatrix], BinarySolution]


# ---------------------------------------------------------------------------
# Exhaustive search
# ---------------------------------------------------------------------------


def _bits(values: np.ndarray, width: int) -> np.ndarray:
    return ((values[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.float64)


def _gray_blocks(Q: np.ndarray, k: int):
    """Yield ``(gray_pattern, energies)`` for every high-bit pattern.

    ``energies[v]`` is the energy of the bitstring whose low ``k`` bits
    encode ``v`` and whose high bits encode ``gray_pattern``.
    """
    m = Q.shape[0] - k
    low = np.arange(1 << k, dtype=np.int64)
    B = _bits(low, k)
    Qll = Q[:k, :k]
    block = B @ np.diag(Qll) + np.einsum("ri,ij,rj->r", B, np.triu(Qll, 1), B)
    P = B @ Q[:k, k:]  # cross terms contributed by each high bit
    Qhh = Q[k:, k:]
    Ssym = np.triu(Qhh, 1) + np.triu(Qhh, 1).T
    h = np.zeros(m)
    e_high = 0.0
    gray = 0
    for t in range(1 << m):
        if t:
            j = (t & -t).bit_length() - 1
            sign = 1.0 - 2.0 * h[j]
            e_high += sign * (Qhh[j, j] + Ssym[j] @ h)
            block += sign * P[:, j]
            h[j] = 1.0 - h[j]
            gray ^= 1 << j
        yield gray, block + e_high


def solve_exhaustive(qubo: QuboMatrix, max_bits: int = EXHAUSTIVE_MAX_BITS) -> BinarySolution:
    """Global minimum by Gray-code enumeration.

    The lowest ``k <= 16`` bits form one vectorised block of ``2^k``
    energies; the high bits are walked in Gray-code order, each flip
    updating the block incrementally. Energies within ``1e-10`` (relative
    to the coefficient mass) of the minimum are ties, resolved by fewest
    set bits and then the smallest integer encoding (bit ``i`` worth
    ``2^i``).
    """
    Q = np.triu(np.asarray(qubo.Q, dtype=np.float64))
    n = Q.shape[0]
    if n > max_bits:
        raise CapacityError(f"exhaustive search is capped at {max_bits} bits, got {n}")
    if n == 0:
        raise ShapeError("empty QUBO")
    k = min(n, 16)
    tol = 1e-10 * (1.0 + np.abs(Q).sum())

    emin = min(float(e.min()) for _, e in _gray_blocks(Q, k))

    low_pop = _bits(np.arange(1 << k, dtype=np.int64), k).sum(axis=1).astype(np.int64)
    best_key = None
    for gray, energies in _gray_blocks(Q, k):
        hits = np.flatnonzero(energies <= emin + tol)
        if hits.size == 0:
            continue
        pops = low_pop[hits]
        v = int(hits[pops == pops.min()].min())  # hits are ascending
        key = (int(pops.min()) + bin(gray).count("1"), v + (gray << k))
        if best_key is None or key < best_key:
            best_key = key
    code = best_key[1]
    w = np.array([(code >> i) & 1 for i in range(n)], dtype=np.int64)
    return BinarySolution(w=w, energy=qubo_energy(Q, w), solver="exhaustive")


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


def interchangeable_groups(Q: np.ndarray) -> list[list[int]]:
    """Classes of variables that can be swapped without changing any energy.

    Identical weak learners produce such classes; pinning the members'
    order removes the symmetric copies of every solution from the search.
    """
    Q = np.triu(np.asarray(Q, dtype=np.float64))
    n = Q.shape[0]
    M = np.triu(Q, 1) + np.triu(Q, 1).T
    diag = np.diag(Q)
    scale = 1e-12 * (1.0 + np.abs(Q).max())
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(diag[i] - diag[j]) > scale:
                continue
            mask = np.ones(n, dtype=bool)
            mask[[i, j]] = False
            if np.all(np.abs(M[i, mask] - M[j, mask]) <= scale):
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def _local_search(Q: np.ndarray, M: np.ndarray, w: np.ndarray) -> np.ndarray:
    diag = np.diag(Q)
    w = w.astype(np.float64).copy()
    while True:
        delta = (1.0 - 2.0 * w) * (diag + M @ w)
        i = int(np.argmin(delta))
        if delta[i] >= -1e-12:
            return w
        w[i] = 1.0 - w[i]


def solve_exact(qubo: QuboMatrix, max_nodes: int = 1_000_000) -> BinarySolution:
    """Exact minimum by depth-first branch and bound.

    Bounds come from the convex relaxation obtained by adding
    ``mu * (x_i^2 - x_i)`` (zero on bitstrings, non-positive on the box) with
    ``mu`` large enough to make the quadratic part positive semidefinite;
    the relaxed problem is a bounded least-squares solve and its
    linearisation gives a certified lower bound. Interchangeable variables
    are ordered so symmetric solutions are visited once. Ties follow the
    exhaustive solver's rule (fewest set bits, then smallest encoding).
    Intended for classifier-selection QUBOs beyond the exhaustive cap,
    whose structure keeps the tree small; ``max_nodes`` guards the rest.
    """
    from scipy.optimize import lsq_linear

    Q = np.triu(np.asarray(qubo.Q, dtype=np.float64))
    n = Q.shape[0]
    if n == 0:
        raise ShapeError("empty QUBO")
    M = np.triu(Q, 1) + np.triu(Q, 1).T
    q = np.diag(Q).copy()
    lmin = float(np.linalg.eigvalsh(M).min())
    mu = max(0.0, -lmin / 2.0) + 1e-7 * (1.0 + abs(lmin))
    P = M + 2.0 * mu * np.eye(n)
    c = q - mu
    R = np.linalg.cholesky(P).T               # P = R^T R
    b = -np.linalg.solve(R.T, c)              # f(x) = 0.5 |Rx - b|^2 - 0.5 |b|^2
    f_const = -0.5 * float(b @ b)
    tol = 1e-10 * (1.0 + np.abs(Q).sum())

    groups = interchangeable_groups(Q)
    group_of = np.empty(n, dtype=np.int64)
    rank = np.empty(n, dtype=np.int64)
    for g, members in enumerate(groups):
        for r, i in enumerate(members):
            group_of[i], rank[i] = g, r

    def canonical(w: np.ndarray) -> np.ndarray:
        out = np.zeros(n, dtype=np.int64)
        for members in groups:
            out[members[: int(w[members].sum())]] = 1
        return out

    def key(w: np.ndarray):
        return (int(w.sum()), sum(1 << int(i) for i in np.flatnonzero(w)))

    best_w, best_e = None, np.inf

    def offer(w: np.ndarray) -> None:
        nonlocal best_w, best_e
        w = canonical(w)
        e = qubo_energy(Q, w)
        if e < best_e - tol:
            best_w, best_e = w, e
        elif e <= best_e + tol and key(w) < key(best_w):
            best_w, best_e = w, min(e, best_e)

    for start in (np.zeros(n), np.ones(n)):
        offer(_local_search(Q, M, start).round())

    def assign(fix: np.ndarray, j: int, v: int):
        fix = fix.copy()
        members = groups[group_of[j]]
        targets = members[: rank[j] + 1] if v == 1 else members[rank[j]:]
        if np.any((fix[targets] >= 0) & (fix[targets] != v)):
            return None
        fix[targets] = v
        return fix

    nodes = 0
    stack = [np.full(n, -1, dtype=np.int64)]
    while stack:
        fix = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise CapacityError(f"branch and bound exceeded {max_nodes} nodes")
        free = np.flatnonzero(fix < 0)
        x = (fix == 1).astype(np.float64)
        if free.size == 0:
            offer(x)
            continue
        rhs = b - R[:, fix == 1].sum(axis=1)
        x[free] = lsq_linear(R[:, free], rhs, bounds=(0.0, 1.0), method="bvls").x
        fx = 0.5 * float(np.sum((R @ x - b) ** 2)) + f_const
        g = (P @ x + c)[free]
        lb = fx + float(np.minimum(-g * x[free], g * (1.0 - x[free])).sum())
        if lb > best_e + tol:
            continue
        xf = x[free]
        if np.all(np.minimum(xf, 1.0 - xf) < 1e-9):
            x[free] = xf.round()
            offer(x)
            if lb > best_e - tol:
                continue
        j = int(free[np.argmin(np.abs(xf - 0.5))])
        first = 1 if x[j] >= 0.5 else 0
        for v in (1 - first, first):  # preferred branch popped first
            child = assign(fix, j, v)
            if child is not None:
                stack.append(child)

    return BinarySolution(w=best_w, energy=qubo_energy(Q, best_w), solver="exact")


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SAParams:
    sweeps: int = 1000
    restarts: int = 20
    beta_initial: float | None = None
    beta_final: float | None = None
    cooling: float = 0.95

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ConfigError("sweeps and restarts must be >= 1")
        if not 0 < self.cooling < 1:
            raise ConfigError("cooling factor must lie in (0, 1)")
        for b in (self.beta_initial, self.beta_final):
            if b is not None and b <= 0:
                raise ConfigError("inverse temperatures must be positive")


def _calibrate_betas(Q: np.ndarray, Ssym: np.ndarray, params: SAParams, seed: int):
    rng = np.random.default_rng([seed, 0x5A])
    n = Q.shape[0]
    states = rng.integers(0, 2, size=(100, n)).astype(np.float64)
    flips = rng.integers(0, n, size=100)
    rows = np.arange(100)
    field_ = states @ Ssym
    delta = (1 - 2 * states[rows, flips]) * (np.diag(Q)[flips] + field_[rows, flips])
    uphill = delta[delta > 1e-12]
    if uphill.size == 0:
        uphill = np.abs(delta[np.abs(delta) > 1e-12])
    scale = float(uphill.mean()) if uphill.size else 1.0
    smallest = float(uphill.min()) if uphill.size else 1.0
    beta_i = params.beta_initial or -math.log(0.8) / scale
    beta_f = params.beta_final or -math.log(1e-3) / max(smallest, 1e-3 * scale)
    return beta_i, max(beta_f, beta_i)


def _schedule(beta_i: float, beta_f: float, params: SAParams) -> np.ndarray:
    levels = math.ceil(math.log(beta_f / beta_i) / math.log(1.0 / params.cooling)) + 1
    levels = max(1, min(levels, params.sweeps))
    betas = np.geomspace(beta_i, beta_f, levels)
    return betas[(np.arange(params.sweeps) * levels) // params.sweeps]


def solve_sa(qubo: QuboMatrix, params: SAParams = SAParams(), seed: int = 0) -> BinarySolution:
    """Single-bit-flip Metropolis annealing with best-of-restarts.

    Restart ``r`` draws all of its randomness from ``default_rng(seed + r)``,
    so the restarts are independent and are simulated side by side as one
    batch. Inverse temperature rises geometrically by ``1/cooling`` per level
    from ``beta_initial`` (auto: ~0.8 uphill acceptance over 100 random
    flips) to ``beta_final``. The lowest-energy state wins, earliest restart
    on ties.
    """
    Q = np.triu(np.asarray(qubo.Q, dtype=np.float64))
    n = Q.shape[0]
    if n < 1:
        raise ShapeError("empty QUBO")
    Ssym = np.triu(Q, 1) + np.triu(Q, 1).T
    diag = np.diag(Q).copy()
    beta_i, beta_f = _calibrate_betas(Q, Ssym, params, seed)
    betas = _schedule(beta_i, beta_f, params)

    R = params.restarts
    rngs = [np.random.default_rng(seed + r) for r in range(R)]
    W = np.stack([g.integers(0, 2, size=n) for g in rngs]).astype(np.float64)
    U = np.stack([g.random((params.sweeps, n)) for g in rngs])  # (R, sweeps, n)
    F = W @ Ssym
    E = W @ diag + 0.5 * np.einsum("ri,ri->r", W, F)
    best_E, best_W = E.copy(), W.copy()

    for s, beta in enumerate(betas):
        for i in range(n):
            d = (1.0 - 2.0 * W[:, i]) * (diag[i] + F[:, i])
            with np.errstate(over="ignore"):
                acc = (d <= 0) | (U[:, s, i] < np.exp(-beta * d))
            if acc.any():
                step = np.where(acc, 1.0 - 2.0 * W[:, i], 0.0)
                W[:, i] += step
                F += step[:, None] * Ssym[i][None, :]
                E += np.where(acc, d, 0.0)
        better = E < best_E - 1e-12
        if better.any():
            best_E[better] = E[better]
            best_W[better] = W[better]

    exact = np.array([qubo_energy(Q, w) for w in best_W])
    r = int(np.argmin(exact))  # first index on ties
    w = best_W[r].astype(np.int64)
    return BinarySolution(w=w, energy=float(exact[r]), solver="sa", seed=seed)


def make_solver(name: str, sa_params: SAParams = SAParams(), seed: int = 0) -> Sampler:
    """Sampler for ``"exhaustive"``, ``"exact"`` or ``"sa"``."""
    if name == "exhaustive":
        return solve_exhaustive
    if name == "exact":
        return solve_exact
    if name == "sa":
        return lambda q: solve_sa(q, sa_params, seed)
    raise ConfigError(f"unknown solver {name!r}")


# ---------------------------------------------------------------------------
# Threshold and strong classifier
# ---------------------------------------------------------------------------


def _sign0(v: float) -> float:
    return float(np.sign(v))


def compute_threshold(w_opt, H_train, mode: str = "sweep", y_train=None) -> float:
    """Offset subtracted from the selected trees' vote.

    ``paper``: sign of the mean normalized ensemble score (sign(0) = 0).
    ``sweep``: the candidate minimising training error among midpoints of
    consecutive distinct sorted scores plus one value below and one above
    the score range; ties go to the smallest ``|T|``.
    """
    w = np.asarray(w_opt).ravel()
    H = np.asarray(H_train)
    if H.ndim != 2 or H.shape[1] != w.shape[0]:
        raise ShapeError(f"H shape {H.shape} does not match {w.shape[0]} weights")
    if w.sum() == 0:
        raise DegenerateModelError("no classifier selected")
    N = H.shape[1]
    scores = H @ w
    if mode == "paper":
        return _sign0(np.mean(scores / N))
    if mode != "sweep":
        raise ConfigError(f"unknown threshold mode {mode!r}")
    if y_train is None:
        raise ConfigError("sweep threshold needs training labels")
    y = np.asarray(y_train)
    distinct = np.unique(scores).astype(np.float64)
    cands = np.concatenate(
        [[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]]
    )
    errs = np.array([np.sum(np.where(scores >= t, 1, -1) != y) for t in cands])
    ok = np.flatnonzero(errs == errs.min())
    return float(cands[ok[np.argmin(np.abs(cands[ok]))]])


@dataclass(frozen=True)
class QBoostModel:
    trees: tuple[DecisionTree, ...]     # selected trees only
    bits: np.ndarray                    # selection over the initial ensemble
    threshold: float
    lam: float
    depth: int
    qubo_mode: str = "consistent"
    threshold_mode: str = "sweep"
    solver: str = "exhaustive"
    energy: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def n_selected(self) -> int:
        return len(self.trees)

    @property
    def n_initial(self) -> int:
        return len(self.bits)

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "bits": [int(b) for b in self.bits],
            "threshold": self.threshold,
            "lambda": self.lam,
            "depth": self.depth,
            "qubo_mode": self.qubo_mode,
            "threshold_mode": self.threshold_mode,
            "solver": self.solver,
            "energy": self.energy,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QBoostModel":
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in data["trees"]),
            bits=np.asarray(data["bits"], dtype=np.int64),
            threshold=float(data["threshold"]),
            lam=float(data["lambda"]),
            depth=int(data["depth"]),
            qubo_mode=data.get("qubo_mode", "consistent"),
            threshold_mode=data.get("threshold_mode", "sweep"),
            solver=data.get("solver", "exhaustive"),
            energy=float(data.get("energy", float("nan"))),
            metadata=data.get("metadata", {}),
        )

    def save(self, path: str | os.PathLike) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.predict(X)
        return votes - self.threshold

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


def qboost_predict(model: QBoostModel, x) -> int:
    """Strong-classifier label for one row; a zero margin maps to +1."""
    return int(model.predict(np.asarray(x).reshape(1, -1))[0])


def qboost_from_ensemble(
    ensemble: WeakEnsemble,
    y,
    lam: float,
    solver: Sampler = solve_exhaustive,
    qubo_mode: str = "consistent",
    threshold_mode: str = "sweep",
) -> QBoostModel:
    """Select trees from an already trained ensemble and fit the threshold."""
    y = np.asarray(y)
    qubo = build_qubo(ensemble.H, y, lam, qubo_mode)
    sol = solver(qubo)
    bits = np.asarray(sol.w, dtype=np.int64)
    if bits.sum() == 0:
        raise DegenerateModelError(f"solver selected no classifier at lambda={lam}")
    T = compute_threshold(bits, ensemble.H, threshold_mode, y_train=y)
    selected = tuple(t for t, b in zip(ensemble.trees, bits) if b)
    return QBoostModel(
        trees=selected,
        bits=bits,
        threshold=T,
        lam=float(lam),
        depth=ensemble.depth,
        qubo_mode=qubo_mode,
        threshold_mode=threshold_mode,
        solver=sol.solver,
        energy=sol.energy,
    )


def fit_qboost(
    X,
    y,
    n_trees: int = 10,
    depth: int = 3,
    lam: float = 0.0,
    solver: Sampler = solve_exhaustive,
    qubo_mode: str = "consistent",
    threshold_mode: str = "sweep",
    seed: int = 0,
) -> QBoostModel:
    ensemble = train_weak_ensemble(X, y, n_trees, depth, seed)
    return qboost_from_ensemble(ensemble, y, lam, solver, qubo_mode, threshold_mode)
