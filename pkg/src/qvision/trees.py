"""Weighted CART decision trees with +/-1 leaves (Gini impurity).

Trees are stored as flat node arrays: internal nodes hold ``feature`` /
``threshold`` / child indices, leaves hold ``feature == -1`` and a label in
``value``. Rows go left iff ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, WeightError

LEAF = -1
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray     # int64, LEAF for leaves
    threshold: np.ndarray   # float64, 0.0 for leaves
    left: np.ndarray        # int64, -1 for leaves
    right: np.ndarray       # int64, -1 for leaves
    value: np.ndarray       # int64, +/-1 at leaves, 0 at internal nodes
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self) -> dict:
        return {
            "max_depth": int(self.max_depth),
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [int(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.int64),
            max_depth=int(data["max_depth"]),
        )

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        used = self.used_features()
        if used and X.shape[1] <= max(used):
            raise ShapeError(f"tree tests feature {max(used)}, rows have {X.shape[1]} features")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat != LEAF
            if not active.any():
                break
            r, n = rows[active], node[active]
            go_left = X[r, feat[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
        return self.value[node]


def _leaf_label(w_y_sum: float) -> int:
    return 1 if w_y_sum >= 0 else -1


def _best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Return ``(score, feature, threshold)`` maximising the Gini purity term.

    The purity term is ``sum_child (W+^2 + W-^2) / W_child``; the weighted
    Gini impurity of the split is ``W - term``, so maximising one minimises
    the other. Ties resolve to the lowest feature, then lowest threshold.
    """
    n, F = X.shape
    wp = np.where(y == 1, w, 0.0)
    wn = np.where(y == 1, 0.0, w)
    tot_p, tot_n = wp.sum(), wn.sum()
    best = (-np.inf, -1, 0.0)
    step = max(1, _CHUNK_CELLS // max(n, 1))
    for start in range(0, F, step):
        Xc = X[:, start:start + step]
        order = np.argsort(Xc, axis=0, kind="stable")
        xs = np.take_along_axis(Xc, order, axis=0)
        lp = np.cumsum(wp[order], axis=0)[:-1]
        ln = np.cumsum(wn[order], axis=0)[:-1]
        rp, rn = tot_p - lp, tot_n - ln
        wl, wr = lp + ln, rp + rn
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(wl > 0, (lp * lp + ln * ln) / wl, 0.0) + np.where(
                wr > 0, (rp * rp + rn * rn) / wr, 0.0
            )
        valid = xs[1:] > xs[:-1]
        term = np.where(valid, term, -np.inf).T  # (features, positions)
        flat = int(np.argmax(term))
        f, p = divmod(flat, term.shape[1]) if term.size else (0, 0)
        if term.size and term[f, p] > best[0]:
            thr = (xs[p, f] + xs[p + 1, f]) / 2.0
            best = (float(term[f, p]), start + f, float(thr))
    return best


def tree_fit(X, y, weights=None, max_depth: int = 1) -> DecisionTree:
    """Greedy weighted CART.

    Growth stops at ``max_depth``, at label-pure nodes, or when no split
    lowers the weighted Gini impurity. Leaves predict the sign of the
    weighted label sum, ties going to +1.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError(f"need a non-empty 2-D feature matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isin(y, (-1, 1))):
        raise ShapeError("labels must be -1 or +1")
    if weights is None:
        weights = np.full(X.shape[0], 1.0 / X.shape[0])
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape:
        raise ShapeError("weights must have one entry per sample")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise WeightError(f"weights must sum to 1 (got {w.sum():.12g})")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0)
        return len(feature) - 1

    # iterative DFS keeps node numbering in pre-order
    root = new_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn, wn = y[idx], w[idx]
        mass = wn.sum()
        label = _leaf_label(float(np.dot(wn, yn)))
        if depth >= max_depth or np.all(yn == yn[0]) or mass <= 0:
            value[node] = label
            continue
        parent = (wn[yn == 1].sum() ** 2 + wn[yn != 1].sum() ** 2) / mass
        score, f, thr = _best_split(X[idx], yn, wn)
        if f < 0 or score <= parent + 1e-12 * mass:
            value[node] = label
            continue
        go_left = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        lnode = new_node()
        rnode = new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.int64),
        max_depth=int(max_depth),
    )


def tree_predict(tree: DecisionTree, x) -> int:
    """Label for a single feature row."""
    x = np.asarray(x, dtype=np.float64).ravel()
    node = 0
    while tree.feature[node] != LEAF:
        f = int(tree.feature[node])
        if f >= x.shape[0]:
            raise ShapeError(f"tree tests feature {f}, row has {x.shape[0]} features")
        node = int(tree.left[node] if x[f] <= tree.threshold[node] else tree.right[node])
    return int(tree.value[node])
