"""Metrics, resampling, splits, sweep harnesses, timing and report tables.

The defect class (+1) is the positive class throughout. Metrics with a zero
denominator are ``None`` and render as ``0.00*`` in reports.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateModelError,
    IoError,
    ResampleError,
    ShapeError,
    SplitError,
)
from .ingest import Dataset
from .qboost import (
    QBoostModel,
    Sampler,
    WeakEnsemble,
    qboost_from_ensemble,
    solve_exhaustive,
    train_weak_ensemble,
)

REPORT_COLUMNS = (
    "model", "precision", "recall", "f1", "selected", "initial",
    "lambda", "depth", "train_s", "infer_ms",
)
UNDEFINED = "0.00*"


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _pm1(y, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise ShapeError(f"{name} must be a 1-D array of -1/+1")
    return y


def confusion(y_true, y_pred) -> Confusion:
    t, p = _pm1(y_true, "y_true"), _pm1(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch: {t.shape[0]} truths, {p.shape[0]} predictions")
    tp = int(np.sum((t == 1) & (p == 1)))
    fp = int(np.sum((t == -1) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == -1)))
    tn = int(np.sum((t == -1) & (p == -1)))
    return Confusion(tp, fp, fn, tn)


def precision(c: Confusion) -> float | None:
    d = c.tp + c.fp
    return c.tp / d if d else None


def recall(c: Confusion) -> float | None:
    d = c.tp + c.fn
    return c.tp / d if d else None


def f1_from_pr(p: float | None, r: float | None) -> float | None:
    if p is None or r is None or p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def f1(c: Confusion) -> float | None:
    return f1_from_pr(precision(c), recall(c))


# ---------------------------------------------------------------------------
# Resampling and splitting
# ---------------------------------------------------------------------------


def random_under_sample(X, y, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Balance classes 50-50 by dropping majority samples at random.

    The minority class is kept whole; the output order is a seeded shuffle.
    """
    X = np.asarray(X)
    y = _pm1(y, "y")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, y has {y.shape[0]} labels")
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == -1)
    if len(pos) == 0 or len(neg) == 0:
        raise ResampleError("under-sampling needs both classes present")
    rng = np.random.default_rng(seed)
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    kept = np.concatenate([minority, rng.choice(majority, size=len(minority), replace=False)])
    order = kept[rng.permutation(len(kept))]
    return X[order], y[order]


def stratified_split_indices(y, test_fraction: float = 0.2, seed: int = 0):
    """Per-class proportional split returning sorted ``(train_idx, test_idx)``.

    The test set holds ``ceil(test_fraction * S)`` samples, allotted to the
    classes by largest remainder of their proportional quotas. Every class
    keeps at least one sample on each side.
    """
    y = _pm1(y, "labels")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    classes = (-1, 1)
    members = {c: np.flatnonzero(y == c) for c in classes}
    for c in classes:
        if len(members[c]) < 2:
            raise SplitError(f"class {c:+d} has {len(members[c])} samples; need at least 2")
    n_test = math.ceil(test_fraction * len(y) - 1e-9)
    quota = {c: test_fraction * len(members[c]) for c in classes}
    alloc = {c: math.floor(quota[c]) for c in classes}
    by_remainder = sorted(classes, key=lambda c: (-(quota[c] - alloc[c]), c))
    for c in by_remainder[: max(0, n_test - sum(alloc.values()))]:
        alloc[c] += 1
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in classes:
        idx = members[c]
        k = min(max(alloc[c], 1), len(idx) - 1)
        perm = rng.permutation(idx)
        test.append(perm[:k])
        train.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0):
    train_idx, test_idx = stratified_split_indices(dataset.labels, test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


# ---------------------------------------------------------------------------
# Rows, timing, sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    model: str
    precision: float | None
    recall: float | None
    f1: float | None
    selected: int | None = None
    initial: int | None = None
    lam: float | None = None
    depth: int | None = None
    train_s: float | None = None
    infer_ms: float | None = None


def metric_row(model: str, y_true, y_pred, **extra) -> MetricRow:
    c = confusion(y_true, y_pred)
    return MetricRow(model, precision(c), recall(c), f1(c), **extra)


def time_inference(predict: Callable, X, repetitions: int = 5) -> dict:
    """Median wall-clock time of ``predict(X)`` over ``repetitions`` runs."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    X = np.asarray(X)
    if X.shape[0] == 0:
        raise ShapeError("cannot time inference on zero rows")
    runs = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        predict(X)
        runs.append(time.perf_counter() - t0)
    total = float(np.median(runs))
    return {"total_s": total, "per_image_ms": 1000.0 * total / X.shape[0]}


def evaluate_qboost(
    ensemble: WeakEnsemble,
    y_train,
    X_test,
    y_test,
    lam: float,
    solver: Sampler = solve_exhaustive,
    qubo_mode: str = "consistent",
    threshold_mode: str = "sweep",
    name: str = "qboost",
    timing: bool = False,
    repetitions: int = 5,
) -> tuple[MetricRow, QBoostModel | None]:
    """Select, threshold and score one QBoost model on a trained ensemble.

    An empty selection yields a row with undefined metrics and no model.
    """
    extra = dict(initial=ensemble.n_trees, lam=float(lam), depth=ensemble.depth)
    try:
        model = qboost_from_ensemble(ensemble, y_train, lam, solver, qubo_mode, threshold_mode)
    except DegenerateModelError:
        return MetricRow(name, None, None, None, selected=0, **extra), None
    if timing:
        extra["infer_ms"] = time_inference(model.predict, X_test, repetitions)["per_image_ms"]
    row = metric_row(name, y_test, model.predict(X_test), selected=model.n_selected, **extra)
    return row, model


def sweep_regularization(
    X_train,
    y_train,
    X_test,
    y_test,
    lambdas: Sequence[float],
    n_trees: int = 10,
    depth: int = 3,
    solver: Sampler = solve_exhaustive,
    qubo_mode: str = "consistent",
    threshold_mode: str = "sweep",
    seed: int = 0,
    ensemble: WeakEnsemble | None = None,
    name: str = "qboost",
    timing: bool = False,
) -> list[MetricRow]:
    """One row per λ; the weak ensemble is trained once and reused."""
    lambdas = list(lambdas)
    if not lambdas:
        raise ConfigError("the lambda grid is empty")
    if ensemble is None:
        ensemble = train_weak_ensemble(X_train, y_train, n_trees, depth, seed)
    return [
        evaluate_qboost(ensemble, y_train, X_test, y_test, lam, solver, qubo_mode,
                        threshold_mode, name, timing)[0]
        for lam in lambdas
    ]


def sweep_depth(
    X_train,
    y_train,
    X_test,
    y_test,
    depths: Sequence[int],
    lambdas: Sequence[float],
    n_trees: int = 10,
    solver: Sampler = solve_exhaustive,
    qubo_mode: str = "consistent",
    threshold_mode: str = "sweep",
    seed: int = 0,
    timing: bool = True,
) -> list[MetricRow]:
    """λ sweep repeated for each tree depth, with per-image inference times."""
    depths = list(depths)
    if not depths:
        raise ConfigError("the depth grid is empty")
    rows: list[MetricRow] = []
    for d in depths:
        rows += sweep_regularization(
            X_train, y_train, X_test, y_test, lambdas, n_trees, d, solver, qubo_mode,
            threshold_mode, seed, name=f"qboost-d{d}", timing=timing,
        )
    return rows


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def format_metric(v: float | None) -> str:
    return UNDEFINED if v is None else f"{v:.2f}"


def _cells(row: MetricRow) -> list[str]:
    def opt(v, fmt):
        return "" if v is None else format(v, fmt)

    return [
        row.model,
        format_metric(row.precision),
        format_metric(row.recall),
        format_metric(row.f1),
        opt(row.selected, "d"),
        opt(row.initial, "d"),
        opt(row.lam, "g"),
        opt(row.depth, "d"),
        opt(row.train_s, ".3f"),
        opt(row.infer_ms, ".3f"),
    ]


def render_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow(_cells(row))
    return buf.getvalue()


def render_markdown(rows: Sequence[MetricRow], notes: Sequence[str] = ()) -> str:
    lines = [
        "| " + " | ".join(REPORT_COLUMNS) + " |",
        "|" + "|".join("---" for _ in REPORT_COLUMNS) + "|",
    ]
    lines += ["| " + " | ".join(_cells(r)) + " |" for r in rows]
    if any(None in (r.precision, r.recall, r.f1) for r in rows):
        lines += ["", "\\* undefined (zero denominator), shown as 0.00"]
    if notes:
        lines += [""] + [f"- {n}" for n in notes]
    return "\n".join(lines) + "\n"


def emit_report(
    rows: Sequence[MetricRow],
    fmt: str,
    path: str | os.PathLike | None = None,
    notes: Sequence[str] = (),
) -> str:
    """Render rows as ``csv`` or ``markdown``; write to ``path`` if given.

    ``notes`` (run defaults, deviations) are appended to markdown only so the
    CSV keeps a fixed column layout.
    """
    rows = list(rows)
    if not rows:
        raise ConfigError("no rows to report")
    if fmt == "csv":
        text = render_csv(rows)
    elif fmt in ("markdown", "md"):
        text = render_markdown(rows, notes)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise IoError(f"cannot write report {path}: {exc}") from exc
    return text
