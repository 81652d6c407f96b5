"""Command-line interface tying the pipeline together.

Commands: ``generate`` (synthetic dataset), ``summarize``, ``train`` (one
fold), ``crossval`` (grouped stratified k-fold), ``evaluate`` (saved model on
a dataset), ``mcnemar`` (compare two prediction files), ``gradcheck``
(finite-difference suite).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
Set ``GAITSEQ_NO_COLOR`` to disable ANSI output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, dataset_summary, load_dataset
from .evaluate import (
    MetricSet,
    as_percent,
    confusion,
    mcnemar_exact,
    metrics,
    read_predictions_csv,
    write_predictions_csv,
)
from .gradcheck import run_gradcheck
from .model import (
    ModelArchitecture,
    NumericalDivergenceError,
    load_model,
)
from .augment import FeatureStats
from .seeding import stable_seed
from .synthetic import GaitParams, generate_dataset
from .train import (
    TrainConfig,
    _summarize_fold,
    _write_history_csv,
    crossval,
    grouped_stratified_kfold,
    predict_sequences,
    save_fold_model,
    train_split,
    write_run_dir,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _use_color() -> bool:
    return "GAITSEQ_NO_COLOR" not in os.environ and sys.stdout.isatty()


def _bold(text: str) -> str:
    return f"\x1b[1m{text}\x1b[0m" if _use_color() else text


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits with code 1 on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_arch(text: str) -> tuple[int, int]:
    try:
        layers_text, hidden_text = text.lower().split("x")
        layers, hidden = int(layers_text), int(hidden_text)
        if layers < 1 or hidden < 1:
            raise ValueError
        return layers, hidden
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected LxH (e.g. 2x128 or 3x256), got {text!r}"
        ) from None


def _manifest_path(data: str) -> Path:
    path = Path(data)
    return path if path.is_file() else path / "manifest.json"


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="dataset directory (or manifest path)")
    parser.add_argument("--out", required=True, help="run output directory")
    parser.add_argument("--config", help="JSON config file with flag defaults")
    parser.add_argument("--arch", type=_parse_arch, help="layers x hidden, e.g. 3x128")
    parser.add_argument("--seq-len", type=int, choices=(30, 60, 90), help="crop length T")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--dropout", type=float)
    parser.add_argument("--clip", type=float, help="gradient clipping threshold")
    parser.add_argument("--standardize", type=_parse_bool, metavar="true|false")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    parser.add_argument("--folds", type=int, default=5, help="number of CV folds")


def _resolve_config(args: argparse.Namespace) -> TrainConfig:
    base = TrainConfig().to_dict()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        loaded = json.loads(path.read_text())
        loaded.pop("k", None)
        loaded.pop("data", None)
        base.update(loaded)
    overrides = {
        "seq_len": args.seq_len,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "weight_decay": args.weight_decay,
        "dropout": args.dropout,
        "clip_threshold": args.clip,
        "standardize": args.standardize,
        "seed": args.seed,
    }
    if args.arch is not None:
        overrides["num_layers"], overrides["hidden"] = args.arch
    base.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(base)


def _print_metrics_table(rows: list[tuple[str, MetricSet]]) -> None:
    header = f"{'split':<8}{'accuracy':>10}{'f1(macro)':>11}{'sens':>8}{'spec':>8}"
    print(_bold(header))
    for name, m in rows:
        print(
            f"{name:<8}{as_percent(m.accuracy):>10}{as_percent(m.macro_f1):>11}"
            f"{as_percent(m.sensitivity):>8}{as_percent(m.specificity):>8}"
        )


def _cmd_generate(args: argparse.Namespace) -> int:
    normal = GaitParams(
        stride_period=args.normal_period,
        walk_speed=args.normal_speed,
        head_bob_amplitude=args.normal_bob,
        back_arch_offset=0.0,
        noise_sigma=args.noise,
    )
    lame = GaitParams(
        stride_period=args.lame_period,
        walk_speed=args.lame_speed,
        head_bob_amplitude=args.lame_bob,
        back_arch_offset=args.arch_offset,
        noise_sigma=args.noise,
    )
    dataset = generate_dataset(
        n_cows=args.cows,
        seqs_per_cow=args.seqs_per_cow,
        lame_fraction=args.lame_fraction,
        normal_params=normal,
        lame_params=lame,
        seed=args.seed,
        out_dir=args.out,
    )
    summary = dataset_summary(dataset)
    print(
        f"wrote {summary.n_sequences} sequences ({summary.n_normal} normal, "
        f"{summary.n_lame} lame) for {summary.n_cows} cows to {args.out}"
    )
    return EXIT_OK


def _cmd_summarize(args: argparse.Namespace) -> int:
    summary = dataset_summary(load_dataset(_manifest_path(args.data)))
    print(f"sequences: {summary.n_sequences}")
    print(f"normal:    {summary.n_normal}")
    print(f"lame:      {summary.n_lame}")
    print(f"cows:      {summary.n_cows}")
    print(f"frames:    min {summary.min_frames} / mean {summary.mean_frames} / max {summary.max_frames}")
    return EXIT_OK


def _cmd_crossval(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    dataset = load_dataset(_manifest_path(args.data))
    result = crossval(dataset, config, k=args.folds, jobs=args.jobs)
    write_run_dir(args.out, result, data_path=args.data)
    rows = [(f"fold{o.fold_index}", o.metric_set) for o in result.folds]
    _print_metrics_table(rows)
    agg = result.aggregate
    print(
        f"{'mean':<8}{as_percent(agg.accuracy.mean):>10}{as_percent(agg.macro_f1.mean):>11}"
        f"{as_percent(agg.sensitivity.mean):>8}{as_percent(agg.specificity.mean):>8}"
    )
    print(f"report written to {Path(args.out) / 'report.json'}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    dataset = load_dataset(_manifest_path(args.data))
    assignment = grouped_stratified_kfold(dataset, k=args.folds, seed=config.seed)
    if not 0 <= args.fold < assignment.k:
        raise DataError(f"fold index {args.fold} out of range for {assignment.k} folds")
    train_ids = assignment.training_ids(dataset, args.fold)
    val_ids = assignment.validation_ids(args.fold)
    run_seed = stable_seed(config.seed, args.fold, 0)
    result = train_split(dataset, train_ids, val_ids, config, run_seed=run_seed)
    outcome = _summarize_fold(args.fold, len(train_ids), result)

    out_dir = Path(args.out)
    fold_dir = out_dir / f"fold{args.fold}"
    fold_dir.mkdir(parents=True, exist_ok=True)
    config_doc = config.to_dict()
    config_doc["k"] = assignment.k
    config_doc["data"] = str(args.data)
    (out_dir / "config.json").write_text(json.dumps(config_doc, indent=2, sort_keys=True) + "\n")
    save_fold_model(fold_dir / "model.bin", result, config, args.fold)
    _write_history_csv(fold_dir / "history.csv", result.history)
    write_predictions_csv(out_dir / "predictions.csv", result.val_predictions)
    _print_metrics_table([(f"fold{args.fold}", outcome.metric_set)])
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    params, arch, metadata = load_model(args.model)
    dataset = load_dataset(_manifest_path(args.data))
    seq_len = args.seq_len if args.seq_len is not None else metadata.get("seq_len")
    if seq_len is None:
        raise DataError("model metadata lacks seq_len; pass --seq-len")
    stats = None
    if metadata.get("standardize") and metadata.get("feature_mean") is not None:
        stats = FeatureStats(
            mean=np.asarray(metadata["feature_mean"], dtype=np.float64),
            std=np.asarray(metadata["feature_std"], dtype=np.float64),
        )
    records = predict_sequences(params, arch, list(dataset), int(seq_len), stats)
    write_predictions_csv(args.out, records)
    _print_metrics_table([("all", metrics(confusion(records)))])
    print(f"predictions written to {args.out}")
    return EXIT_OK


def _cmd_mcnemar(args: argparse.Namespace) -> int:
    preds_a = read_predictions_csv(args.predictions_a)
    preds_b = read_predictions_csv(args.predictions_b)
    result = mcnemar_exact(preds_a, preds_b)
    print(f"b (A correct, B wrong): {result.b}")
    print(f"c (A wrong, B correct): {result.c}")
    print(f"exact p-value:          {result.p_value!r}")
    verdict = "significant" if result.significant() else "not significant"
    print(f"difference at p < 0.05: {verdict}")
    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    dtype = np.float64 if args.precision == "f64" else np.float32
    report = run_gradcheck(n_models=args.models, dtype=dtype)
    print(
        f"checked {report.n_parameters} parameters across {report.n_models} models: "
        f"max relative error {report.max_rel_error:.3e} (tolerance {report.tolerance:.0e})"
    )
    if not report.passed:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    print("gradient check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaitseq", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gaitseq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic two-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--cows", type=int, default=40)
    p.add_argument("--seqs-per-cow", type=int, default=5)
    p.add_argument("--lame-fraction", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=2.0, help="coordinate noise sigma (px)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normal-period", type=float, default=31.0, help="frames per stride")
    p.add_argument("--lame-period", type=float, default=45.0)
    p.add_argument("--normal-speed", type=float, default=3.0, help="px per frame")
    p.add_argument("--lame-speed", type=float, default=2.0)
    p.add_argument("--normal-bob", type=float, default=3.0, help="head bob amplitude (px)")
    p.add_argument("--lame-bob", type=float, default=8.0)
    p.add_argument("--arch-offset", type=float, default=12.0, help="lame back arch (px)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("summarize", help="print dataset summary")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("crossval", help="grouped stratified k-fold training")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_crossval)

    p = sub.add_parser("train", help="train a single fold")
    _add_train_flags(p)
    p.add_argument("--fold", type=int, default=0, help="which fold to hold out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="predictions.csv")
    p.add_argument("--seq-len", type=int, help="override the crop length stored in the model")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("mcnemar", help="exact McNemar test on two prediction files")
    p.add_argument("predictions_a")
    p.add_argument("predictions_b")
    p.set_defaults(func=_cmd_mcnemar)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--models", type=int, default=20)
    p.add_argument(
        "--precision",
        choices=("f32", "f64"),
        default="f64",
        help="f32 is diagnostic only and will not meet the tolerance",
    )
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return code
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalDivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
