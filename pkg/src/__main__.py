"""Command-line entry point: generate, train, predict, evaluate and sweep."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from src.features.evaluation import (
    SPLITS,
    ExperimentConfig,
    ensure_split,
    evaluate_split,
    export_prediction,
    generate_data,
    sweep,
    write_sweep,
)
from src.features.fem import MeshSpec
from src.features.microstructure import load_microstructure
from src.features.surrogate import load_model, predict, save_model
from src.features.training import TrainingDataset, fit, write_cv_table, write_training_log
from src.features.feature_functions import DesignMatrixCache
from src.shared.errors import ConfigError, SurrogateError, describe_error, exit_code_for
from src.shared.logging import LoggingConfig, get_logger, setup_logging

logger = get_logger(__name__)


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(Path(args.config)) if args.config else ExperimentConfig()
    return config.with_seed(args.seed)


def _data_root(args: argparse.Namespace) -> Path:
    return Path(args.data) if getattr(args, "data", None) else Path(args.out) / "data"


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    splits = SPLITS if args.split == "all" else (args.split,)
    for split in splits:
        manifest = generate_data(config, split, _data_root(args), args.threads)
        print(f"{split}: {len(manifest.completed)} samples, {len(manifest.failed)} failed")
    config.save(Path(args.out) / "config.json")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = Path(args.out)
    train = ensure_split(config, _data_root(args), "train", threads=args.threads)
    catalog = config.catalog()
    dataset = TrainingDataset.from_microstructures(
        train.microstructures,
        train.solutions,
        config.coarse_mesh,
        catalog,
        config.boundary,
        args.threads,
        DesignMatrixCache(out / "cache"),
    )
    params, state = fit(dataset, catalog, config.coarse_mesh, config.em, threads=args.threads)
    params.metadata.update(
        {
            "dataset_hash": dataset.dataset_hash,
            "n_train": dataset.n_samples,
            "iterations": state.iteration,
            "converged": state.converged,
            "seed": config.em.seed,
        }
    )
    save_model(out / "model.json", params)
    params.catalog.save(out / "catalog.json")
    write_training_log(out / "training_log.csv", state)
    if state.cv_rows:
        write_cv_table(out / "cv_scores.csv", state.cv_rows)
    print(f"model: {out / 'model.json'} (gamma={state.gamma:g}, nnz_theta={params.nnz_theta})")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    config = _load_config(args)
    params = load_model(Path(args.model) if args.model else Path(args.out) / "model.json")
    if args.input:
        microstructure = load_microstructure(Path(args.input))
        target = Path(args.out) / "prediction"
    else:
        test = ensure_split(config, _data_root(args), "test", threads=args.threads)
        if not 0 <= args.sample < len(test):
            raise ConfigError(f"Test sample {args.sample} is out of range (0..{len(test) - 1})")
        microstructure = test.microstructures[args.sample]
        target = Path(args.out) / "prediction" / f"sample_{args.sample:04d}"
    n_samples = args.n_samples or config.n_pred_samples
    ensemble = predict(microstructure, params, n_samples, config.seed, threads=args.threads)
    export_prediction(target, microstructure, params, ensemble)
    print(f"prediction: {target}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    params = load_model(Path(args.model) if args.model else Path(args.out) / "model.json")
    report = evaluate_split(params, config, _data_root(args), args.threads)
    report.save(Path(args.out))
    coverage = ", ".join(f"{k}sigma={v:.3f}" for k, v in report.coverage.items())
    print(f"relative_error={report.relative_error:.6g} d2={report.d2:.6g} var_Uf={report.var_uf:.6g} {coverage}")
    return 0


def _parse_mesh(text: str) -> MeshSpec:
    try:
        nx, ny = (int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected NXxNY, got {text!r}") from e
    return MeshSpec(nx, ny)


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = Path(args.out)
    rows = sweep(
        config,
        _data_root(args),
        args.n_train or None,
        args.coarse or None,
        args.threads,
        out / "cache",
    )
    write_sweep(out / "sweep.csv", rows)
    failed = sum(1 for r in rows if r.status != "ok")
    print(f"sweep: {len(rows)} points, {failed} failed -> {out / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default="", help="Experiment config JSON")
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--out", type=str, default="out", help="Output directory")
    common.add_argument("--threads", type=int, default=1, help="Worker threads")

    parser = argparse.ArgumentParser(
        prog="coarse-surrogate",
        description="Probabilistic coarse-grained surrogates for heat conduction in random media",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", parents=[common], help="Sample microstructures and fine solutions")
    p_gen.add_argument("--split", choices=[*SPLITS, "all"], default="all")
    p_gen.add_argument("--data", type=str, default="", help="Dataset root (default: <out>/data)")
    p_gen.set_defaults(func=_cmd_generate)

    p_train = sub.add_parser("train", parents=[common], help="Fit the surrogate by Monte-Carlo EM")
    p_train.add_argument("--data", type=str, default="", help="Dataset root (default: <out>/data)")
    p_train.set_defaults(func=_cmd_train)

    p_pred = sub.add_parser("predict", parents=[common], help="Sample the predictive density")
    p_pred.add_argument("--model", type=str, default="", help="Model JSON (default: <out>/model.json)")
    p_pred.add_argument("--input", type=str, default="", help="Microstructure stem to predict for")
    p_pred.add_argument("--sample", type=int, default=0, help="Test sample index when --input is absent")
    p_pred.add_argument("--n-samples", type=int, default=0, help="Predictive draws (default: from config)")
    p_pred.add_argument("--data", type=str, default="", help="Dataset root (default: <out>/data)")
    p_pred.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", parents=[common], help="Relative error and coverage on the test split")
    p_eval.add_argument("--model", type=str, default="", help="Model JSON (default: <out>/model.json)")
    p_eval.add_argument("--data", type=str, default="", help="Dataset root (default: <out>/data)")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_sweep = sub.add_parser("sweep", parents=[common], help="Error versus training size and coarse mesh")
    p_sweep.add_argument("--data", type=str, default="", help="Dataset root (default: <out>/data)")
    p_sweep.add_argument("--n-train", type=int, nargs="*", default=[], help="Training-set sizes")
    p_sweep.add_argument("--coarse", type=_parse_mesh, nargs="*", default=[], help="Coarse meshes as NXxNY")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(replace(LoggingConfig.from_environment(), log_dir=Path(args.out) / "logs"), force=True)
    logger.info("Command started", extra={"context": {"command": args.command, "argv": list(argv or sys.argv[1:])}})
    try:
        return int(args.func(args))
    except (SurrogateError, OSError) as e:
        logger.error("Command failed", extra={"context": {"command": args.command, "error": str(e)}}, exc_info=True)
        print(f"error: {describe_error(e)}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    raise SystemExit(main())
