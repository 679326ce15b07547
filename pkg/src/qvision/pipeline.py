"""Run configuration and end-to-end orchestration shared by the CLI and tests.

Seeds: every stage draws from the root seed plus a fixed offset (see
``SEED_OFFSETS``), so changing one stage's randomness never shifts another's.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import adaboost_fit, linear_svm_fit, rbf_svm_fit
from .enhance import DEFAULT_CLIP, DEFAULT_TILES, StretchLimits, apply_enhancement
from .errors import CapacityError, ConfigError
from .evaluation import (
    MetricRow,
    evaluate_qboost,
    metric_row,
    random_under_sample,
    stratified_split_indices,
    time_inference,
)
from .ingest import (
    TARGET_SHAPE,
    Dataset,
    LabeledSample,
    SyntheticConfig,
    flatten_dataset,
    generate_synthetic,
    load_gdxray,
    minmax_bounds,
    minmax_scale,
    standardize_apply,
    standardize_fit,
)
from .qboost import SAParams, WeakEnsemble, make_solver, train_weak_ensemble
from .qkernel import MAX_QUBITS, FeatureMapSpec, kernel_matrix, svm_predict, svm_train_precomputed
from .reduce import PcaModel, pca_fit, pca_transform

SEED_OFFSETS = {"data": 0, "split": 1, "rus": 2, "trees": 3, "solver": 4, "svm": 5}
MODEL_FAMILIES = ("linsvm", "rbfsvm", "adaboost", "qsvm", "qboost-exhaustive", "qboost-sa", "qboost-exact")
ENHANCE_METHODS = ("none", "stretch", "histeq", "adapthist")
_MODEL_RE = re.compile(r"^(?P<family>[a-z]+(?:-[a-z]+)?)(?:-(?P<trees>\d+))?$")


def parse_model_name(name: str) -> tuple[str, int | None]:
    """``"adaboost-50"`` -> ``("adaboost", 50)``; ``"qboost-sa"`` -> ``("qboost-sa", None)``."""
    m = _MODEL_RE.match(name)
    if not m or m.group("family") not in MODEL_FAMILIES:
        raise ConfigError(f"unknown model {name!r}; families: {', '.join(MODEL_FAMILIES)}")
    trees = m.group("trees")
    if trees is not None and m.group("family") in ("linsvm", "rbfsvm", "qsvm"):
        raise ConfigError(f"model {name!r} does not take a tree count")
    return m.group("family"), None if trees is None else int(trees)


def parse_grid(text: str) -> list[float]:
    """``"0:100:5"`` (inclusive range) or ``"0,5,10"``."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ConfigError("grid step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(max(n, 0))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}") from exc


@dataclass(frozen=True)
class RunConfig:
    # exactly one of synthetic / gdxray
    synthetic: dict | None = None
    gdxray: str | None = None
    series: tuple[str, ...] | None = None
    resize: tuple[int, int] | None = None   # None: native for synthetic, TARGET_SHAPE for gdxray
    test_fraction: float = 0.2
    rus: bool = False
    enhance: str = "none"
    percentiles: tuple[float, float] = (2.0, 98.0)
    tiles: tuple[int, int] = DEFAULT_TILES
    clip: float | None = DEFAULT_CLIP
    pca_k: int | None = 10
    models: tuple[str, ...] = ("qboost-exhaustive",)
    n_trees: int = 10
    depth: int = 3
    adaboost_depth: int = 1
    lam: float = 5.0
    C: float = 1.0
    reps: int = 2
    qubo_mode: str = "consistent"
    threshold_mode: str = "sweep"
    sa_sweeps: int = 1000
    sa_restarts: int = 20
    lambdas: tuple[float, ...] = ()
    depths: tuple[int, ...] = ()
    seed: int = 0
    timing: bool = False
    output: str | None = None
    format: str = "csv"

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def validate(self) -> "RunConfig":
        if (self.synthetic is None) == (self.gdxray is None):
            raise ConfigError("exactly one data source (synthetic manifest or gdxray root) is required")
        if self.synthetic is not None:
            SyntheticConfig.from_manifest(self.synthetic)
        if self.gdxray is not None and not Path(self.gdxray).is_dir():
            raise ConfigError(f"gdxray root not found: {self.gdxray}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.enhance not in ENHANCE_METHODS:
            raise ConfigError(f"unknown enhancement {self.enhance!r}")
        StretchLimits(p_low=self.percentiles[0], p_high=self.percentiles[1])
        if self.pca_k is not None and self.pca_k < 1:
            raise ConfigError("pca k must be >= 1")
        if self.n_trees < 1 or self.depth < 1 or self.adaboost_depth < 1:
            raise ConfigError("tree counts and depths must be >= 1")
        if self.C <= 0 or self.reps < 1:
            raise ConfigError("C must be positive and reps >= 1")
        if self.format not in ("csv", "markdown", "md"):
            raise ConfigError(f"unknown report format {self.format!r}")
        SAParams(sweeps=self.sa_sweeps, restarts=self.sa_restarts)
        for name in self.models:
            family, _ = parse_model_name(name)
            if family == "qsvm":
                n = self.pca_k
                if n is None or n > MAX_QUBITS:
                    raise CapacityError(
                        f"qsvm needs at most {MAX_QUBITS} features (one qubit each); "
                        f"pca k={n if n is not None else 'none'}"
                    )
        return self

    def notes(self) -> list[str]:
        return [
            f"seed={self.seed}; pca k={self.pca_k if self.pca_k is not None else 'none'}; "
            f"enhance={self.enhance}; rus={'on' if self.rus else 'off'}",
            f"linear SVM: C={self.C:g}, epochs<=1000, tol=1e-4; RBF SVM: C-SVM (not nu-SVM), "
            f"C={self.C:g}, gamma=scale",
            f"QBoost: qubo={self.qubo_mode}, threshold={self.threshold_mode}, "
            f"SA sweeps={self.sa_sweeps}, restarts={self.sa_restarts}",
        ]

    # nested JSON layout: {data, enhance, pca, model, sweep, seed, output}
    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"data", "enhance", "pca", "model", "sweep", "seed", "timing", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data = d.get("data", {})
        enh = d.get("enhance", {})
        pca = d.get("pca", {})
        model = d.get("model", {})
        sweep = d.get("sweep", {})
        out = d.get("output", {})
        kw: dict = {}

        def take(section: dict, key: str, attr: str, conv=lambda v: v):
            if key in section:
                kw[attr] = None if section[key] is None else conv(section[key])

        take(data, "synthetic", "synthetic", dict)
        if "manifest" in data:
            if "synthetic" in data:
                raise ConfigError("give either data.synthetic or data.manifest, not both")
            kw["synthetic"] = SyntheticConfig.load(data["manifest"]).to_manifest()
        take(data, "gdxray", "gdxray", str)
        take(data, "series", "series", tuple)
        take(data, "resize", "resize", lambda v: tuple(int(x) for x in v))
        take(data, "test_fraction", "test_fraction", float)
        take(data, "rus", "rus", bool)
        take(enh, "method", "enhance", str)
        take(enh, "percentiles", "percentiles", lambda v: tuple(float(x) for x in v))
        take(enh, "tiles", "tiles", lambda v: tuple(int(x) for x in v))
        take(enh, "clip", "clip", float)
        if "k" in pca:
            kw["pca_k"] = None if pca["k"] in (None, "none", 0) else int(pca["k"])
        take(model, "names", "models", tuple)
        take(model, "n_trees", "n_trees", int)
        take(model, "depth", "depth", int)
        take(model, "adaboost_depth", "adaboost_depth", int)
        take(model, "lambda", "lam", float)
        take(model, "C", "C", float)
        take(model, "reps", "reps", int)
        take(model, "qubo_mode", "qubo_mode", str)
        take(model, "threshold_mode", "threshold_mode", str)
        take(model, "sa_sweeps", "sa_sweeps", int)
        take(model, "sa_restarts", "sa_restarts", int)
        take(sweep, "lambda", "lambdas", lambda v: tuple(float(x) for x in v))
        take(sweep, "depth", "depths", lambda v: tuple(int(x) for x in v))
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "timing" in d:
            kw["timing"] = bool(d["timing"])
        take(out, "path", "output", str)
        take(out, "format", "format", str)
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "data": {
                "synthetic": self.synthetic,
                "gdxray": self.gdxray,
                "series": list(self.series) if self.series else None,
                "resize": list(self.resize) if self.resize else None,
                "test_fraction": self.test_fraction,
                "rus": self.rus,
            },
            "enhance": {
                "method": self.enhance,
                "percentiles": list(self.percentiles),
                "tiles": list(self.tiles),
                "clip": self.clip,
            },
            "pca": {"k": self.pca_k},
            "model": {
                "names": list(self.models),
                "n_trees": self.n_trees,
                "depth": self.depth,
                "adaboost_depth": self.adaboost_depth,
                "lambda": self.lam,
                "C": self.C,
                "reps": self.reps,
                "qubo_mode": self.qubo_mode,
                "threshold_mode": self.threshold_mode,
                "sa_sweeps": self.sa_sweeps,
                "sa_restarts": self.sa_restarts,
            },
            "sweep": {"lambda": list(self.lambdas), "depth": list(self.depths)},
            "seed": self.seed,
            "timing": self.timing,
            "output": {"path": self.output, "format": self.format},
        }


def merge_config(base: dict, overrides: dict) -> dict:
    """Deep-merge ``overrides`` (flag values, ``None`` = unset) into ``base``."""
    out = json.loads(json.dumps(base))
    for key, value in overrides.items():
        if isinstance(value, dict):
            out[key] = merge_config(out.get(key, {}) or {}, value)
        elif value is not None:
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------

TABLE1_MODELS = (
    "linsvm", "rbfsvm", "adaboost-10", "adaboost-50", "qsvm", "qboost-exhaustive", "qboost-sa",
)

RECIPES: dict[str, dict] = {
    "table1": {
        "pca": {"k": 10},
        "model": {"names": list(TABLE1_MODELS), "n_trees": 10, "depth": 3, "lambda": 5.0},
    },
    "table5": {
        "pca": {"k": None},
        "model": {"names": ["qboost-exhaustive"], "n_trees": 10, "depth": 3},
        "sweep": {"lambda": parse_grid("0:100:5")},
    },
    "table7": {
        "pca": {"k": None},
        "model": {"names": ["qboost-exact"], "n_trees": 50, "depth": 3},
        "sweep": {"lambda": parse_grid("0:50:5")},
    },
    "table9": {
        "pca": {"k": None},
        "model": {"names": ["qboost-exhaustive"], "n_trees": 10},
        "sweep": {"lambda": parse_grid("0:150:10"), "depth": [2, 3, 4]},
        "timing": True,
    },
}


def recipe(name: str) -> dict:
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")
    return json.loads(json.dumps(RECIPES[name]))


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    pca: PcaModel | None = None
    _angles: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Features min-max scaled to ``[0, pi]`` on training bounds (test rows clipped)."""
        if self._angles is None:
            bounds = minmax_bounds(self.X_train)
            self._angles = (
                minmax_scale(self.X_train, 0.0, math.pi, bounds),
                minmax_scale(self.X_test, 0.0, math.pi, bounds, clip=True),
            )
        return self._angles


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.synthetic is not None:
        manifest = dict(cfg.synthetic)
        manifest.setdefault("seed", cfg.stage_seed("data"))
        return generate_synthetic(SyntheticConfig.from_manifest(manifest))
    return load_gdxray(cfg.gdxray, list(cfg.series) if cfg.series else None)


def enhance_dataset(dataset: Dataset, cfg: RunConfig) -> Dataset:
    if cfg.enhance == "none":
        return dataset
    opts = {
        "limits": StretchLimits(p_low=cfg.percentiles[0], p_high=cfg.percentiles[1]),
        "tile_grid": cfg.tiles,
        "clip_limit": cfg.clip,
    }
    return Dataset(tuple(
        LabeledSample(apply_enhancement(s.image, cfg.enhance, **opts), s.label, s.series_id, s.image_id)
        for s in dataset
    ))


def features(dataset: Dataset, cfg: RunConfig) -> np.ndarray:
    target = cfg.resize
    if target is None and cfg.gdxray is not None:
        target = TARGET_SHAPE
    return flatten_dataset(dataset, target)


def prepare(cfg: RunConfig, dataset: Dataset | None = None) -> PreparedData:
    """Load, enhance, flatten, split, (optionally) balance, standardize and reduce."""
    if dataset is None:
        dataset = load_dataset(cfg)
    dataset = enhance_dataset(dataset, cfg)
    X = features(dataset, cfg)
    y = dataset.labels
    train_idx, test_idx = stratified_split_indices(y, cfg.test_fraction, cfg.stage_seed("split"))
    X_train, y_train = X[train_idx], y[train_idx]
    X_test, y_test = X[test_idx], y[test_idx]
    if cfg.rus:
        X_train, y_train = random_under_sample(X_train, y_train, cfg.stage_seed("rus"))
    scaler = standardize_fit(X_train)
    X_train, X_test = standardize_apply(scaler, X_train), standardize_apply(scaler, X_test)
    pca = None
    if cfg.pca_k is not None:
        pca = pca_fit(X_train, cfg.pca_k)
        X_train, X_test = pca_transform(pca, X_train), pca_transform(pca, X_test)
    return PreparedData(X_train, y_train, X_test, y_test, pca)


# ---------------------------------------------------------------------------
# Model runners
# ---------------------------------------------------------------------------


class Runner:
    """Trains and scores the configured models on one prepared split.

    Weak ensembles are cached per (tree count, depth) so QBoost variants on
    the same split share their trees.
    """

    def __init__(self, cfg: RunConfig, data: PreparedData):
        self.cfg = cfg
        self.data = data
        self._ensembles: dict[tuple[int, int], tuple[WeakEnsemble, float]] = {}

    def ensemble(self, n_trees: int, depth: int) -> tuple[WeakEnsemble, float]:
        key = (n_trees, depth)
        if key not in self._ensembles:
            t0 = time.perf_counter()
            ens = train_weak_ensemble(
                self.data.X_train, self.data.y_train, n_trees, depth, self.cfg.stage_seed("trees")
            )
            self._ensembles[key] = (ens, time.perf_counter() - t0)
        return self._ensembles[key]

    def solver(self, family: str):
        name = family.split("-", 1)[1]
        params = SAParams(sweeps=self.cfg.sa_sweeps, restarts=self.cfg.sa_restarts)
        return make_solver(name, params, self.cfg.stage_seed("solver"))

    def _timed(self, row_kw: dict, train_s: float, predict) -> dict:
        if self.cfg.timing:
            row_kw["train_s"] = train_s
            row_kw["infer_ms"] = time_inference(predict, self.data.X_test)["per_image_ms"]
        return row_kw

    def run(self, name: str, lam: float | None = None, depth: int | None = None) -> MetricRow:
        cfg, d = self.cfg, self.data
        family, trees = parse_model_name(name)
        svm_seed = cfg.stage_seed("svm")
        if family.startswith("qboost"):
            n = trees or cfg.n_trees
            dep = depth or cfg.depth
            ens, train_s = self.ensemble(n, dep)
            t0 = time.perf_counter()
            row, _ = evaluate_qboost(
                ens, d.y_train, d.X_test, d.y_test, cfg.lam if lam is None else lam,
                self.solver(family), cfg.qubo_mode, cfg.threshold_mode, name, cfg.timing,
            )
            if cfg.timing:
                row = replace(row, train_s=train_s + time.perf_counter() - t0)
            return row

        t0 = time.perf_counter()
        if family == "linsvm":
            model = linear_svm_fit(d.X_train, d.y_train, C=cfg.C, seed=svm_seed)
            predict = model.predict
        elif family == "rbfsvm":
            model = rbf_svm_fit(d.X_train, d.y_train, C=cfg.C, seed=svm_seed)
            predict = model.predict
        elif family == "adaboost":
            dep = depth or cfg.adaboost_depth
            model = adaboost_fit(d.X_train, d.y_train, trees or cfg.n_trees, dep, cfg.stage_seed("trees"))
            predict = model.predict
        else:  # qsvm
            A_train, A_test = d.angles()
            if A_train.shape[1] > MAX_QUBITS:
                raise CapacityError(f"qsvm needs at most {MAX_QUBITS} features, got {A_train.shape[1]}")
            spec = FeatureMapSpec(n=A_train.shape[1], reps=cfg.reps)
            svm = svm_train_precomputed(kernel_matrix(A_train, spec=spec), d.y_train, C=cfg.C, seed=svm_seed)

            def predict(_X, svm=svm, spec=spec):
                return svm_predict(svm, kernel_matrix(A_test, A_train, spec=spec))

        train_s = time.perf_counter() - t0
        kw: dict = {}
        if family == "adaboost":
            kw.update(selected=model.n_stages, initial=model.n_stages, depth=dep)
        self._timed(kw, train_s, predict)
        return metric_row(name, d.y_test, predict(d.X_test), **kw)


def run_bench(cfg: RunConfig, data: PreparedData | None = None) -> list[MetricRow]:
    cfg.validate()
    runner = Runner(cfg, data if data is not None else prepare(cfg))
    return [runner.run(name) for name in cfg.models]


def run_sweep(cfg: RunConfig, data: PreparedData | None = None) -> list[MetricRow]:
    """λ sweep (for each depth in ``depths`` if given) of every QBoost model."""
    cfg.validate()
    if not cfg.lambdas:
        raise ConfigError("the lambda grid is empty")
    qmodels = [m for m in cfg.models if parse_model_name(m)[0].startswith("qboost")]
    if not qmodels:
        raise ConfigError("sweeps need at least one qboost-* model")
    runner = Runner(cfg, data if data is not None else prepare(cfg))
    depths = cfg.depths or (cfg.depth,)
    return [
        runner.run(name, lam=lam, depth=dep)
        for name in qmodels
        for dep in depths
        for lam in cfg.lambdas
    ]


def config_summary(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
