"""
Command-line surface: ``python -m apps.cli <command>``.

Exit codes: 0 success, 1 usage / config error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from core.config import ExperimentConfig, apply_overrides, load_config, save_config
from core.errors import EXIT_CODES, HyperRiskError

logger = logging.getLogger(__name__)


# ------------------------- Parser -------------------------

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config document")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperrisk", description="Adaptive multi-view hypergraph accident-risk forecasting")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("make-synthetic", help="write a synthetic grid city dataset")
    _common(synth)
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--regions", type=int, default=25)
    synth.add_argument("--steps", type=int, default=120)
    synth.add_argument("--hotspots", type=int, default=5)
    synth.add_argument("--interval", type=int, default=24, choices=[12, 24])
    synth.add_argument("--no-holidays", action="store_true", help="omit holidays.csv (generated at ingest)")

    ingest = commands.add_parser("ingest", help="parse a manifest into <output_dir>/dataset.npz")
    _common(ingest)
    ingest.add_argument("--dataset", type=Path, default=None, help="manifest or dataset directory")

    train = commands.add_parser("train", help="train and checkpoint")
    _common(train)
    train.add_argument("--resume", type=Path, default=None)
    train.add_argument("--max-epochs", type=int, default=None)

    evaluate = commands.add_parser("evaluate", help="metrics for a checkpoint or a baseline")
    _common(evaluate)
    evaluate.add_argument("--checkpoint", type=Path, default=None)
    evaluate.add_argument("--split", default="test", choices=["train", "val", "test"])
    evaluate.add_argument("--baseline", choices=["persistence"], default=None)

    predict = commands.add_parser("predict", help="write raw-scale predictions")
    _common(predict)
    predict.add_argument("--checkpoint", type=Path, required=True)
    predict.add_argument("--split", default="test", choices=["train", "val", "test"])
    predict.add_argument("--out", type=Path, default=None)

    export = commands.add_parser("export", help="dump learned structures, predictions and metrics")
    _common(export)
    export.add_argument("--checkpoint", type=Path, required=True)
    export.add_argument("--split", default="test", choices=["train", "val", "test"])
    export.add_argument("--out", type=Path, default=None)
    export.add_argument("--plots", action="store_true")
    return parser


# ------------------------- Commands -------------------------

def _config(args) -> ExperimentConfig:
    checkpoint = getattr(args, "checkpoint", None)
    if args.config is None and checkpoint is not None:
        from harness.checkpoint import checkpoint_config, load_checkpoint

        logger.info("no --config given, using the snapshot stored in %s", checkpoint)
        return apply_overrides(checkpoint_config(load_checkpoint(checkpoint)), seed=args.seed)
    return load_config(args.config, seed=args.seed)


def _experiment(config: ExperimentConfig):
    from harness.data import open_dataset, prepare_experiment

    return prepare_experiment(open_dataset(config), config)


def cmd_make_synthetic(args) -> int:
    from ingest.writers import write_city
    from risk.synthetic import generate_synthetic_city

    seed = args.seed if args.seed is not None else _config(args).seed
    city = generate_synthetic_city(args.regions, args.steps, args.hotspots, seed, interval_hours=args.interval)
    manifest = write_city(city, args.out, with_holidays=not args.no_holidays)
    (Path(args.out) / "synthetic_metadata.json").write_text(json.dumps(city.metadata, indent=2), encoding="utf-8")
    print(manifest)
    return 0


def cmd_ingest(args) -> int:
    from harness.data import ingest_dataset, save_prepared

    config = _config(args)
    source = args.dataset or config.dataset_path
    if source is None:
        raise HyperRiskError("ingest needs --dataset or dataset_path in the config")
    dataset = ingest_dataset(source, config)
    out_dir = Path(config.output_dir)
    path = save_prepared(dataset, out_dir / "dataset.npz")
    summary = {
        "sparsity": dataset.sparsity.model_dump(),
        "issues": dataset.issues.model_dump(),
        "columns": {
            "poi": dataset.poi_columns,
            "road": dataset.road_columns,
            "meteorology": dataset.met_columns,
            "calendar": dataset.cal_columns,
        },
    }
    (out_dir / "ingest_summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    logger.info("✅ prepared dataset written to %s", path)
    print(path)
    return 0


def cmd_train(args) -> int:
    from harness.trainer import Trainer

    config = _config(args)
    data = _experiment(config)
    save_config(config, Path(config.output_dir) / "config.json")
    result = Trainer(config, data).train(resume=args.resume, max_epochs=args.max_epochs)
    logger.info(
        "✅ training finished after %d epoch(s); best epoch %d, val RMSE %s",
        result.epochs_run,
        result.best_epoch,
        result.best_val_rmse,
    )
    print(result.best_path)
    return 0


def cmd_evaluate(args) -> int:
    from evaluation.report import format_table, write_report
    from harness.trainer import evaluate_model, evaluate_persistence, load_model

    config = _config(args)
    data = _experiment(config)
    if args.baseline == "persistence":
        report = evaluate_persistence(data, config, args.split)
    elif args.checkpoint is not None:
        model = load_model(config, data, args.checkpoint)
        report = evaluate_model(model, data, args.split, config.batch_size)
    else:
        raise HyperRiskError("evaluate needs --checkpoint or --baseline")
    write_report(report, config.output_dir)
    print(format_table(report))
    return 0


def cmd_predict(args) -> int:
    from harness.export import write_predictions
    from harness.trainer import load_model

    config = _config(args)
    data = _experiment(config)
    model = load_model(config, data, args.checkpoint)
    out = args.out or Path(config.output_dir) / "predictions.csv"
    print(write_predictions(model, data, config, args.split, out))
    return 0


def cmd_export(args) -> int:
    from harness.export import export_artifacts
    from harness.trainer import load_model

    config = _config(args)
    data = _experiment(config)
    model = load_model(config, data, args.checkpoint)
    out = args.out or Path(config.output_dir) / "export"
    for path in export_artifacts(model, data, config, out, split=args.split, plots=args.plots):
        print(path)
    return 0


COMMANDS = {
    "make-synthetic": cmd_make_synthetic,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "export": cmd_export,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CODES["ok"] if exc.code == 0 else EXIT_CODES["usage"]

    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except HyperRiskError as exc:
        logger.error("❌ %s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
