"""``qvision`` command-line entry point.

Exit statuses: 0 ok, 2 usage/config, 3 data, 4 numerical/capacity.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .enhance import StretchLimits, apply_enhancement
from .errors import ConfigError, IoError, QVisionError
from .evaluation import emit_report
from .ingest import SyntheticConfig, read_png, write_png
from .pipeline import (
    MODEL_FAMILIES,
    RECIPES,
    RunConfig,
    Runner,
    config_summary,
    load_dataset,
    merge_config,
    parse_grid,
    parse_model_name,
    prepare,
    recipe,
    run_bench,
    run_sweep,
)
from .qkernel import FeatureMapSpec, kernel_matrix, save_gram
from .reduce import pca_fit


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _pair(kind):
    def parse(text: str):
        parts = text.replace("x", ",").split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected two values, got {text!r}")
        return [kind(p) for p in parts]
    return parse


def _data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--config", help="run-config JSON; explicit flags override it")
    g.add_argument("--data", help="synthetic manifest (.json) or GDXray root directory")
    g.add_argument("--series", help="comma-separated GDXray series filter")
    g.add_argument("--resize", help="HxW resize target, or 'native'")
    g.add_argument("--test-fraction", type=float)
    g.add_argument("--rus", action="store_true", default=None, help="random under-sampling of the training split")
    g.add_argument("--seed", type=int)
    g.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")


def _enhance_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("enhancement")
    g.add_argument("--enhance", choices=("none", "stretch", "histeq", "adapthist"))
    g.add_argument("--percentiles", type=_pair(float), help="stretch percentiles, e.g. 2,98")
    g.add_argument("--tiles", type=_pair(int), help="adaptive tile grid, e.g. 8x8")
    g.add_argument("--clip", type=float, help="adaptive clip limit (fraction of tile pixels)")


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--pca", help="number of principal components, or 'none'")
    g.add_argument("--trees", type=int, help="weak classifiers per ensemble")
    g.add_argument("--depth", type=int, help="QBoost tree depth")
    g.add_argument("--lambda", dest="lam", type=float, help="QBoost regularization")
    g.add_argument("--C", type=float, help="SVM box parameter")
    g.add_argument("--reps", type=int, help="feature-map repetitions for qsvm")
    g.add_argument("--qubo-mode", choices=("consistent", "paper-exact"))
    g.add_argument("--threshold-mode", choices=("paper", "sweep"))
    g.add_argument("--sa-sweeps", type=int)
    g.add_argument("--sa-restarts", type=int)
    g.add_argument("--timing", action="store_true", default=None, help="fill train_s / infer_ms columns")


def _report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="report path (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "markdown"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qvision", description="X-ray defect classification benchmarks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load or generate a dataset and summarize it")
    _data_flags(p)

    p = sub.add_parser("enhance", help="enhance one PNG image")
    p.add_argument("input")
    p.add_argument("output")
    _enhance_flags(p)

    p = sub.add_parser("pca", help="fit PCA on the training split and save it as JSON")
    _data_flags(p)
    _enhance_flags(p)
    p.add_argument("--pca", required=True)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("kernel", help="quantum-kernel Gram matrix of the training split")
    _data_flags(p)
    _enhance_flags(p)
    p.add_argument("--pca", help="feature count (one qubit each)")
    p.add_argument("--reps", type=int)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("train", help="train one model and report its test metrics")
    _data_flags(p)
    _enhance_flags(p)
    _model_flags(p)
    p.add_argument("--model", required=True, help=f"one of {', '.join(MODEL_FAMILIES)} (optionally -N trees)")
    p.add_argument("--save", help="write the fitted model as JSON")
    _report_flags(p)

    for name, text in (("bench", "run a model set and emit a metrics table"),
                       ("sweep", "sweep QBoost regularization (and depth)")):
        p = sub.add_parser(name, help=text)
        _data_flags(p)
        _enhance_flags(p)
        _model_flags(p)
        p.add_argument("--recipe", choices=sorted(RECIPES))
        p.add_argument("--models", help="comma-separated model list")
        if name == "sweep":
            p.add_argument("--lambdas", help="grid as start:stop:step or a,b,c")
            p.add_argument("--depths", help="comma-separated depth grid")
        _report_flags(p)
    return parser


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable config {path}: {exc}") from exc


def _data_section(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"data path not found: {path}")
    if p.is_dir():
        return {"gdxray": str(p), "synthetic": None}
    return {"synthetic": SyntheticConfig.load(p).to_manifest(), "gdxray": None}


def flag_overrides(args: argparse.Namespace) -> dict:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    data: dict = {}
    if g("data"):
        data.update(_data_section(args.data))
    if g("series"):
        data["series"] = [s for s in args.series.split(",") if s]
    if g("resize"):
        # [] marks "native" so the None-means-unset merge keeps it
        data["resize"] = [] if args.resize == "native" else _pair(int)(args.resize)
    data["test_fraction"] = g("test_fraction")
    data["rus"] = g("rus")
    enhance = {"method": g("enhance"), "percentiles": g("percentiles"), "tiles": g("tiles"), "clip": g("clip")}
    pca = {}
    if g("pca") is not None:
        pca["k"] = "none" if str(args.pca).lower() in ("none", "0") else int(args.pca)
    model = {
        "n_trees": g("trees"), "depth": g("depth"), "lambda": g("lam"), "C": g("C"), "reps": g("reps"),
        "qubo_mode": g("qubo_mode"), "threshold_mode": g("threshold_mode"),
        "sa_sweeps": g("sa_sweeps"), "sa_restarts": g("sa_restarts"),
    }
    if g("models"):
        model["names"] = [m for m in args.models.split(",") if m]
    if g("model"):
        model["names"] = [args.model]
    sweep = {}
    if g("lambdas") is not None:
        sweep["lambda"] = parse_grid(args.lambdas)
    if g("depths") is not None:
        sweep["depth"] = [int(v) for v in parse_grid(args.depths)]
    out = {"path": g("output"), "format": g("format")}
    return {
        "data": data, "enhance": enhance, "pca": pca, "model": model, "sweep": sweep,
        "seed": g("seed"), "timing": g("timing"), "output": out,
    }


def _normalize(d: dict) -> dict:
    data = d.get("data", {})
    if data.get("resize") == []:
        data["resize"] = None
    if d.get("pca", {}).get("k") == "none":
        d["pca"]["k"] = None
    # the data flag replaces whichever source the config file named
    if data.get("synthetic") is not None and data.get("gdxray") is not None:
        raise ConfigError("exactly one data source (synthetic manifest or gdxray root) is required")
    return d


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "recipe", None):
        base = recipe(args.recipe)
    base = merge_config(base, _read_config(getattr(args, "config", None)))
    overrides = flag_overrides(args)
    if overrides["data"].get("synthetic") is not None or overrides["data"].get("gdxray") is not None:
        base.setdefault("data", {}).pop("manifest", None)
        base["data"].pop("synthetic", None)
        base["data"].pop("gdxray", None)
    return RunConfig.from_dict(_normalize(merge_config(base, overrides)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    if cfg.synthetic is None and cfg.gdxray is None:
        raise ConfigError("--data is required")
    if args.dry_run:
        print("config ok")
        return 0
    summary = load_dataset(cfg).summary()
    print(f"{summary['samples']} samples, {summary['positive']} positive")
    for series, counts in sorted(summary["series"].items()):
        print(f"  {series}: {counts['samples']} samples, {counts['positive']} positive")
    return 0


def cmd_enhance(args) -> int:
    opts = {}
    if args.percentiles:
        opts["limits"] = StretchLimits(p_low=args.percentiles[0], p_high=args.percentiles[1])
    if args.tiles:
        opts["tile_grid"] = tuple(args.tiles)
    if args.clip is not None:
        opts["clip_limit"] = args.clip
    image = read_png(args.input)
    write_png(apply_enhancement(image, args.enhance or "none", **opts), args.output)
    return 0


def cmd_pca(args) -> int:
    cfg = resolve_config(args)
    k = cfg.pca_k
    cfg = RunConfig(**{**cfg.__dict__, "pca_k": None}).validate()
    if k is None:
        raise ConfigError("--pca needs a component count")
    if args.dry_run:
        print("config ok")
        return 0
    data = prepare(cfg)
    model = pca_fit(data.X_train, k)
    model.save(args.output)
    print(f"pca k={model.k} on {data.X_train.shape[0]} rows x {model.n_features} features -> {args.output}")
    return 0


def cmd_kernel(args) -> int:
    cfg = resolve_config(args).validate()
    if args.dry_run:
        print("config ok")
        return 0
    data = prepare(cfg)
    A_train, _ = data.angles()
    spec = FeatureMapSpec(n=A_train.shape[1], reps=cfg.reps)
    K = kernel_matrix(A_train, spec=spec)
    save_gram(K, args.output)
    print(f"gram {K.shape[0]}x{K.shape[1]} (n={spec.n}, reps={spec.reps}) -> {args.output}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args).validate()
    if args.dry_run:
        print("config ok")
        return 0
    rows = run_bench(cfg)
    text = emit_report(rows, cfg.format, cfg.output, cfg.notes())
    _emit(text, cfg.output)
    if args.save:
        _save_model(cfg, args.save)
    return 0


def _save_model(cfg: RunConfig, path: str) -> None:
    from .baselines import adaboost_fit, linear_svm_fit, rbf_svm_fit
    from .qboost import qboost_from_ensemble

    data = prepare(cfg)
    family, trees = parse_model_name(cfg.models[0])
    if family.startswith("qboost"):
        runner = Runner(cfg, data)
        ens, _ = runner.ensemble(trees or cfg.n_trees, cfg.depth)
        model = qboost_from_ensemble(ens, data.y_train, cfg.lam, runner.solver(family),
                                     cfg.qubo_mode, cfg.threshold_mode)
    elif family == "linsvm":
        model = linear_svm_fit(data.X_train, data.y_train, C=cfg.C, seed=cfg.stage_seed("svm"))
    elif family == "rbfsvm":
        model = rbf_svm_fit(data.X_train, data.y_train, C=cfg.C, seed=cfg.stage_seed("svm"))
    elif family == "adaboost":
        model = adaboost_fit(data.X_train, data.y_train, trees or cfg.n_trees, cfg.adaboost_depth,
                             cfg.stage_seed("trees"))
    else:
        raise ConfigError("qsvm models are tied to their training Gram matrix; use `qvision kernel`")
    try:
        Path(path).write_text(json.dumps(model.to_dict()))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def cmd_bench(args) -> int:
    cfg = resolve_config(args).validate()
    if args.dry_run:
        print(config_summary(cfg))
        return 0
    rows = run_bench(cfg)
    _emit(emit_report(rows, cfg.format, cfg.output, cfg.notes()), cfg.output)
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args).validate()
    if not cfg.lambdas:
        raise ConfigError("the lambda grid is empty")
    if args.dry_run:
        print(config_summary(cfg))
        return 0
    rows = run_sweep(cfg)
    _emit(emit_report(rows, cfg.format, cfg.output, cfg.notes()), cfg.output)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "enhance": cmd_enhance,
    "pca": cmd_pca,
    "kernel": cmd_kernel,
    "train": cmd_train,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except QVisionError as exc:
        print(f"qvision {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
