"""Training: grouped stratified folds, oversampling, epoch loop, grid search.

One epoch draws N_train samples with replacement, proportional to the class
weights, split into ceil(N/batch) steps; every step augments its batch, runs
a forward/backward pass, clips the global gradient norm, and applies one
optimizer update at the scheduled learning rate.  Validation is deterministic:
center crops, the training split's standardization stats, no jitter.

Cross-validation folds and grid points are independent tasks whose RNG
streams derive from (seed, fold_index, grid_index), so results never depend
on execution order or the number of workers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path

import numpy as np

from .augment import FeatureStats, JitterSpec, evaluation_view, training_view
from .data import DataError, Dataset, KeypointSequence, Label
from .evaluate import (
    ConfusionMatrix,
    FoldAggregate,
    MetricSet,
    PredictionRecord,
    aggregate_folds,
    confusion,
    metrics,
    write_predictions_csv,
)
from .model import (
    ModelArchitecture,
    ModelParams,
    NumericalDivergenceError,
    init_params,
    model_backward,
    model_forward,
    predict,
    save_model,
    sigmoid,
)
from .optim import AdamWAmsgrad, clip_gradients, scheduled_lr
from .seeding import derived_rng, stable_seed


@dataclass(frozen=True)
class TrainConfig:
    """Fully resolved hyperparameters of one training run."""

    seq_len: int = 90
    batch_size: int = 8
    epochs: int = 100
    num_layers: int = 2
    hidden: int = 128
    lr: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.0
    clip_threshold: float = 0.5
    lr_halve_every: int = 50
    jitter_sigma_fraction: float = 0.01
    standardize: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be >= 1, got {self.seq_len}")

    def architecture(self) -> ModelArchitecture:
        return ModelArchitecture(
            num_layers=self.num_layers,
            hidden=self.hidden,
            input_dim=18,
            dropout=self.dropout,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def config_hash(config: TrainConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class FoldAssignment:
    """Validation membership per fold plus the cow-to-fold map."""

    fold_validation_ids: list[list[str]]
    cow_to_fold: dict[str, int]

    @property
    def k(self) -> int:
        return len(self.fold_validation_ids)

    def validation_ids(self, fold_index: int) -> list[str]:
        return list(self.fold_validation_ids[fold_index])

    def training_ids(self, dataset: Dataset, fold_index: int) -> list[str]:
        held_out = set(self.fold_validation_ids[fold_index])
        return [sid for sid in dataset.sequence_ids() if sid not in held_out]


def grouped_stratified_kfold(dataset: Dataset, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Partition sequences into k folds, grouped by cow and stratified by class.

    Greedy assignment: cows ordered by (group size descending, majority
    label, cow id) with seed-shuffled runs of equal size and label; each cow
    goes to the fold where adding it shrinks the total squared deviation of
    per-fold class counts from the balanced target the most, ties broken by
    fold index.  All sequences of one cow always land in one fold.

    Documented stratification tolerance: the greedy keeps each fold's
    per-class count within one largest-cow-group of the balanced target
    (global count / k) for datasets whose largest group is small relative
    to N/k; class fractions are not hard-constrained because grouping can
    make exact stratification infeasible.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    groups: dict[str, list[KeypointSequence]] = {}
    for seq in dataset:
        groups.setdefault(seq.cow_id, []).append(seq)
    if len(groups) < k:
        raise DataError(f"grouping needs at least {k} cows for {k} folds, got {len(groups)}")

    infos = []
    for cow_id, seqs in groups.items():
        counts = (
            sum(1 for s in seqs if s.label == Label.NORMAL),
            sum(1 for s in seqs if s.label == Label.LAME),
        )
        majority = 1 if counts[1] > counts[0] else 0
        infos.append((cow_id, counts, len(seqs), majority))

    # Canonical order first so the seeded shuffle is input-order independent.
    infos.sort(key=lambda it: (-it[2], it[3], it[0]))
    rng = np.random.default_rng(stable_seed(seed, "fold-ties"))
    ordered: list[tuple] = []
    for _, run in groupby(infos, key=lambda it: (it[2], it[3])):
        block = list(run)
        if len(block) > 1:
            rng.shuffle(block)
        ordered.extend(block)

    # Imbalance of a fold: sum over classes of (k * fold_count - total)^2,
    # i.e. the squared deviation from the balanced target scaled by k^2 so
    # everything stays in exact integer arithmetic and ties are real ties.
    totals = (
        sum(info[1][0] for info in infos),
        sum(info[1][1] for info in infos),
    )

    def imbalance(fold_count: tuple[int, int]) -> int:
        return sum((k * fc - tot) ** 2 for fc, tot in zip(fold_count, totals))

    fold_counts: list[tuple[int, int]] = [(0, 0)] * k
    cow_to_fold: dict[str, int] = {}
    for cow_id, counts, size, _ in ordered:
        # Exact imbalance ties go to the emptier fold so no fold can stay
        # empty when whole groups balance each other out, then to the index.
        best_fold = 0
        best_key: tuple[int, int] | None = None
        for f in range(k):
            grown = (fold_counts[f][0] + counts[0], fold_counts[f][1] + counts[1])
            key = (imbalance(grown) - imbalance(fold_counts[f]), sum(grown))
            if best_key is None or key < best_key:
                best_key = key
                best_fold = f
        fold_counts[best_fold] = (
            fold_counts[best_fold][0] + counts[0],
            fold_counts[best_fold][1] + counts[1],
        )
        cow_to_fold[cow_id] = best_fold

    fold_ids: list[list[str]] = [[] for _ in range(k)]
    for seq in dataset:
        fold_ids[cow_to_fold[seq.cow_id]].append(seq.sequence_id)
    return FoldAssignment(fold_validation_ids=fold_ids, cow_to_fold=cow_to_fold)


def sample_weights(labels: list[Label] | np.ndarray) -> np.ndarray:
    """Inverse-class-frequency weight per sequence.

    Sampling with replacement proportionally to these weights draws both
    classes at the same expected rate; each class's weights sum to 1.
    """
    arr = np.array([int(l) for l in labels], dtype=np.int64)
    n_normal = int(np.sum(arr == 0))
    n_lame = int(np.sum(arr == 1))
    if n_normal == 0 or n_lame == 0:
        raise DataError("training split contains a single class; cannot balance sampling")
    counts = np.array([n_normal, n_lame], dtype=np.float64)
    return 1.0 / counts[arr]


def bce_with_logits(logits, targets):
    """Binary cross-entropy on logits, in the overflow-free form.

    loss = max(x, 0) - x * t + log(1 + exp(-|x|)); the gradient w.r.t. the
    logit is sigmoid(x) - t.
    """
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    return np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))


def bce_grad(logits, targets):
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    return sigmoid(x) - t


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float | None
    val_macro_f1: float | None


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    val_predictions: list[PredictionRecord]
    stats: FeatureStats | None
    run_seed: int


def predict_sequences(
    params: ModelParams,
    arch: ModelArchitecture,
    seqs: list[KeypointSequence],
    seq_len: int,
    stats: FeatureStats | None,
    chunk_size: int = 32,
) -> list[PredictionRecord]:
    """Deterministic center-crop inference over a list of sequences."""
    records: list[PredictionRecord] = []
    for start in range(0, len(seqs), chunk_size):
        chunk = seqs[start : start + chunk_size]
        views = [evaluation_view(s, seq_len, stats) for s in chunk]
        batch = np.stack(views, axis=1)
        logits, _ = model_forward(batch, params, arch, "eval")
        for seq, logit in zip(chunk, logits):
            prob, label = predict(float(logit))
            records.append(
                PredictionRecord(
                    sequence_id=seq.sequence_id,
                    true_label=seq.label,
                    pred_label=label,
                    score=prob,
                )
            )
    return records


def train_split(
    dataset: Dataset,
    train_ids: list[str],
    val_ids: list[str],
    config: TrainConfig,
    run_seed: int | None = None,
) -> TrainResult:
    """Train one model on an explicit train/validation split.

    Raises:
        NumericalDivergenceError: the loss went non-finite; the message
            records the offending epoch and step.
    """
    if run_seed is None:
        run_seed = stable_seed(config.seed, 0, 0)
    train_seqs = [dataset.by_id(sid) for sid in train_ids]
    val_seqs = [dataset.by_id(sid) for sid in val_ids]
    if not train_seqs:
        raise DataError("empty training split")

    arch = config.architecture()
    stats = FeatureStats.from_sequences(train_seqs) if config.standardize else None
    weights = sample_weights([s.label for s in train_seqs])
    probs = weights / weights.sum()
    jitter_spec = JitterSpec(config.jitter_sigma_fraction)

    init_rng = derived_rng(run_seed, "init")
    sampler_rng = derived_rng(run_seed, "sampler")
    augment_rng = derived_rng(run_seed, "augment")
    dropout_rng = derived_rng(run_seed, "dropout")

    params = init_params(arch, init_rng, np.float32)
    optimizer = AdamWAmsgrad(params, weight_decay=config.weight_decay)

    n_train = len(train_seqs)
    steps_per_epoch = math.ceil(n_train / config.batch_size)
    targets_all = np.array([float(s.label) for s in train_seqs], dtype=np.float32)

    history: list[EpochStats] = []
    last_val_preds: list[PredictionRecord] | None = None
    for epoch in range(config.epochs):
        lr = scheduled_lr(config.lr, epoch, config.lr_halve_every)
        loss_sum = 0.0
        drawn = 0
        for step in range(steps_per_epoch):
            batch_n = min(config.batch_size, n_train - step * config.batch_size)
            idx = sampler_rng.choice(n_train, size=batch_n, replace=True, p=probs)
            views = [
                training_view(train_seqs[i], config.seq_len, jitter_spec, stats, augment_rng)
                for i in idx
            ]
            batch = np.stack(views, axis=1).astype(np.float32)
            targets = targets_all[idx]
            try:
                logits, tape = model_forward(batch, params, arch, "train", dropout_rng)
            except NumericalDivergenceError as exc:
                raise NumericalDivergenceError(
                    f"epoch {epoch}, step {step}: {exc}"
                ) from exc
            mean_loss = float(np.mean(bce_with_logits(logits, targets)))
            if not math.isfinite(mean_loss):
                raise NumericalDivergenceError(
                    f"non-finite training loss at epoch {epoch}, step {step}"
                )
            loss_sum += mean_loss * batch_n
            drawn += batch_n
            dlogit = ((sigmoid(logits) - targets) / batch_n).astype(np.float32)
            grads = model_backward(tape, dlogit)
            clip_gradients(grads, config.clip_threshold)
            optimizer.step(grads, lr)

        val_acc = val_f1 = None
        if val_seqs:
            last_val_preds = predict_sequences(params, arch, val_seqs, config.seq_len, stats)
            val_metrics = metrics(confusion(last_val_preds))
            val_acc, val_f1 = val_metrics.accuracy, val_metrics.macro_f1
        history.append(EpochStats(epoch, loss_sum / drawn, val_acc, val_f1))

    if val_seqs and last_val_preds is None:
        last_val_preds = predict_sequences(params, arch, val_seqs, config.seq_len, stats)
    return TrainResult(
        params=params,
        history=history,
        val_predictions=last_val_preds or [],
        stats=stats,
        run_seed=run_seed,
    )


@dataclass
class FoldOutcome:
    fold_index: int
    n_train: int
    n_val: int
    result: TrainResult
    confusion_matrix: ConfusionMatrix
    metric_set: MetricSet
    warnings: list[str] = field(default_factory=list)


def train_fold(
    dataset: Dataset,
    assignment: FoldAssignment,
    fold_index: int,
    config: TrainConfig,
    grid_index: int = 0,
) -> FoldOutcome:
    """Train one fold; the RNG stream derives from (seed, fold, grid point)."""
    val_ids = assignment.validation_ids(fold_index)
    train_ids = assignment.training_ids(dataset, fold_index)
    run_seed = stable_seed(config.seed, fold_index, grid_index)
    result = train_split(dataset, train_ids, val_ids, config, run_seed=run_seed)
    return _summarize_fold(fold_index, len(train_ids), result)


def _summarize_fold(fold_index: int, n_train: int, result: TrainResult) -> FoldOutcome:
    cm = confusion(result.val_predictions)
    warnings = []
    if cm.tp + cm.fn == 0:
        warnings.append("validation fold has no lame sequences; sensitivity defined as 0")
    if cm.tn + cm.fp == 0:
        warnings.append("validation fold has no normal sequences; specificity defined as 0")
    return FoldOutcome(
        fold_index=fold_index,
        n_train=n_train,
        n_val=len(result.val_predictions),
        result=result,
        confusion_matrix=cm,
        metric_set=metrics(cm),
        warnings=warnings,
    )


def _fold_task(args: tuple) -> tuple[int, int, FoldOutcome | None, str | None]:
    dataset, assignment, fold_index, config, grid_index = args
    try:
        outcome = train_fold(dataset, assignment, fold_index, config, grid_index)
        return fold_index, grid_index, outcome, None
    except NumericalDivergenceError as exc:
        return fold_index, grid_index, None, str(exc)


def _run_fold_tasks(
    tasks: list[tuple], jobs: int
) -> dict[tuple[int, int], tuple[FoldOutcome | None, str | None]]:
    results: dict[tuple[int, int], tuple[FoldOutcome | None, str | None]] = {}
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            fold_index, grid_index, outcome, error = _fold_task(task)
            results[(fold_index, grid_index)] = (outcome, error)
        return results
    # Forked workers keep interactive parents working (spawn would re-run
    # __main__); task seeds are self-contained, so completion order cannot
    # change results.
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), mp_context=ctx) as pool:
        for fold_index, grid_index, outcome, error in pool.map(_fold_task, tasks):
            results[(fold_index, grid_index)] = (outcome, error)
    return results


@dataclass
class CrossvalResult:
    assignment: FoldAssignment
    folds: list[FoldOutcome]
    aggregate: FoldAggregate
    pooled_predictions: list[PredictionRecord]
    config: TrainConfig


def crossval(dataset: Dataset, config: TrainConfig, k: int = 5, jobs: int = 1) -> CrossvalResult:
    """Grouped stratified k-fold cross-validation at one configuration.

    A fold that diverges aborts the whole run; use :func:`grid_search` to
    score diverging configurations instead.
    """
    assignment = grouped_stratified_kfold(dataset, k=k, seed=config.seed)
    tasks = [(dataset, assignment, f, config, 0) for f in range(k)]
    raw = _run_fold_tasks(tasks, jobs)
    outcomes: list[FoldOutcome] = []
    for f in range(k):
        outcome, error = raw[(f, 0)]
        if outcome is None:
            raise NumericalDivergenceError(f"fold {f}: {error}")
        outcomes.append(outcome)
    return _assemble_crossval(dataset, assignment, outcomes, config)


def _assemble_crossval(
    dataset: Dataset,
    assignment: FoldAssignment,
    outcomes: list[FoldOutcome],
    config: TrainConfig,
) -> CrossvalResult:
    by_id = {
        rec.sequence_id: rec for outcome in outcomes for rec in outcome.result.val_predictions
    }
    pooled = [by_id[sid] for sid in dataset.sequence_ids()]
    return CrossvalResult(
        assignment=assignment,
        folds=outcomes,
        aggregate=aggregate_folds([o.metric_set for o in outcomes]),
        pooled_predictions=pooled,
        config=config,
    )


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values for the three tuned hyperparameters."""

    lrs: tuple[float, ...] = (1e-3, 3e-4, 1e-4)
    weight_decays: tuple[float, ...] = (1e-2, 1e-4)
    dropouts: tuple[float, ...] = (0.0, 0.25, 0.5)

    def __post_init__(self) -> None:
        if not (self.lrs and self.weight_decays and self.dropouts):
            raise ValueError("grid axes must be nonempty")

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (lr, wd, dr)
            for lr in self.lrs
            for wd in self.weight_decays
            for dr in self.dropouts
        ]


@dataclass
class GridSearchResult:
    points: list[tuple[float, float, float]]
    scores: list[float | None]  # mean validation macro F1; None where diverged
    selected_index: int
    crossval_result: CrossvalResult

    @property
    def selected_point(self) -> tuple[float, float, float]:
        return self.points[self.selected_index]

    def selection_record(self) -> dict:
        lr, wd, dr = self.selected_point
        return {
            "grid": [
                {
                    "lr": p[0],
                    "weight_decay": p[1],
                    "dropout": p[2],
                    "mean_val_macro_f1": self.scores[i],
                    "diverged": self.scores[i] is None,
                }
                for i, p in enumerate(self.points)
            ],
            "selected": {"lr": lr, "weight_decay": wd, "dropout": dr},
        }


def grid_search(
    dataset: Dataset,
    grid: HyperGrid,
    base_config: TrainConfig,
    k: int = 5,
    jobs: int = 1,
) -> GridSearchResult:
    """Flat cross-validation grid search over (lr, weight decay, dropout).

    Every grid point is scored by the mean final validation macro F1 across
    the same k folds; a diverging point scores as minus infinity.  The best
    point (ties going to the lower lr, then weight decay, then dropout) is
    retrained on all folds to produce the returned models; with equal seeds
    that retraining reproduces the scoring pass exactly.
    """
    points = grid.points()
    assignment = grouped_stratified_kfold(dataset, k=k, seed=base_config.seed)
    configs = [
        dataclasses.replace(base_config, lr=lr, weight_decay=wd, dropout=dr)
        for lr, wd, dr in points
    ]
    tasks = [
        (dataset, assignment, f, configs[gi], gi)
        for gi in range(len(points))
        for f in range(k)
    ]
    raw = _run_fold_tasks(tasks, jobs)

    scores: list[float | None] = []
    for gi in range(len(points)):
        fold_scores = []
        diverged = False
        for f in range(k):
            outcome, _ = raw[(f, gi)]
            if outcome is None:
                diverged = True
                break
            fold_scores.append(outcome.metric_set.macro_f1)
        scores.append(None if diverged else sum(fold_scores) / len(fold_scores))

    def sort_key(gi: int):
        score = -math.inf if scores[gi] is None else scores[gi]
        lr, wd, dr = points[gi]
        return (-score, lr, wd, dr)

    selected = min(range(len(points)), key=sort_key)
    if scores[selected] is None:
        raise NumericalDivergenceError("every grid point diverged")

    retrain_tasks = [
        (dataset, assignment, f, configs[selected], selected) for f in range(k)
    ]
    raw_final = _run_fold_tasks(retrain_tasks, jobs)
    outcomes = []
    for f in range(k):
        outcome, error = raw_final[(f, selected)]
        if outcome is None:
            raise NumericalDivergenceError(f"fold {f} at selected point: {error}")
        outcomes.append(outcome)
    cv = _assemble_crossval(dataset, assignment, outcomes, configs[selected])
    return GridSearchResult(
        points=points, scores=scores, selected_index=selected, crossval_result=cv
    )


def build_report(result: CrossvalResult, data_path: str | None = None) -> dict:
    """Deterministic report mapping: per-fold metrics, aggregate, config hash."""
    pooled_cm = confusion(result.pooled_predictions)
    report = {
        "config": result.config.to_dict(),
        "config_hash": config_hash(result.config),
        "k": result.assignment.k,
        "folds": [
            {
                "fold": o.fold_index,
                "n_train": o.n_train,
                "n_val": o.n_val,
                "confusion": {
                    "tp": o.confusion_matrix.tp,
                    "fp": o.confusion_matrix.fp,
                    "tn": o.confusion_matrix.tn,
                    "fn": o.confusion_matrix.fn,
                },
                "metrics": o.metric_set.as_dict(),
                "warnings": o.warnings,
            }
            for o in result.folds
        ],
        "aggregate": result.aggregate.as_dict(),
        "pooled": {
            "confusion": {
                "tp": pooled_cm.tp,
                "fp": pooled_cm.fp,
                "tn": pooled_cm.tn,
                "fn": pooled_cm.fn,
            },
            "metrics": metrics(pooled_cm).as_dict(),
        },
    }
    if data_path is not None:
        report["data"] = str(data_path)
    return report


def save_fold_model(
    path: Path | str, result: TrainResult, config: TrainConfig, fold_index: int
) -> None:
    """Save a trained fold with the preprocessing needed to reuse it."""
    stats = result.stats
    metadata = {
        "seq_len": config.seq_len,
        "standardize": config.standardize,
        "feature_mean": None if stats is None else [float(v) for v in stats.mean],
        "feature_std": None if stats is None else [float(v) for v in stats.std],
        "fold": fold_index,
        "run_seed": result.run_seed,
        "config_hash": config_hash(config),
    }
    save_model(result.params, config.architecture(), path, metadata=metadata)


def _write_history_csv(path: Path, history: list[EpochStats]) -> None:
    lines = ["epoch,train_loss,val_accuracy,val_f1"]
    for row in history:
        acc = "" if row.val_accuracy is None else repr(row.val_accuracy)
        f1 = "" if row.val_macro_f1 is None else repr(row.val_macro_f1)
        lines.append(f"{row.epoch},{row.train_loss!r},{acc},{f1}")
    path.write_text("\n".join(lines) + "\n")


def write_run_dir(
    out_dir: str | Path,
    result: CrossvalResult,
    data_path: str | None = None,
    selection: dict | None = None,
) -> Path:
    """Write the run layout: config.json, report.json, predictions, folds."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_doc = result.config.to_dict()
    config_doc["k"] = result.assignment.k
    if data_path is not None:
        config_doc["data"] = str(data_path)
    (out_dir / "config.json").write_text(json.dumps(config_doc, indent=2, sort_keys=True) + "\n")
    report = build_report(result, data_path)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_predictions_csv(out_dir / "predictions.csv", result.pooled_predictions)
    if selection is not None:
        (out_dir / "selection.json").write_text(
            json.dumps(selection, indent=2, sort_keys=True) + "\n"
        )
    for outcome in result.folds:
        fold_dir = out_dir / f"fold{outcome.fold_index}"
        fold_dir.mkdir(exist_ok=True)
        save_fold_model(fold_dir / "model.bin", outcome.result, result.config, outcome.fold_index)
        _write_history_csv(fold_dir / "history.csv", outcome.result.history)
    return out_dir
