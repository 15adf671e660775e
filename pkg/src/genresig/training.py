"""Stratified 6-fold cross-validated training and confusion reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dataset import DatasetEntry, DatasetIndex, TokenLoader
from .errors import GenreTooSmall, NonFiniteLoss
from .model import ModelConfig, ModelParams, forward, init_params
from .optim import adam_step
from .tensor import Tape, backward


@dataclass
class FoldPlan:
    folds: list[list[int]]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_indices(self, fold: int) -> list[int]:
        return [i for f, members in enumerate(self.folds) if f != fold for i in members]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "folds": [list(f) for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(folds=[list(f) for f in d["folds"]], seed=int(d["seed"]))


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 5
    stop_accuracy: float | None = None  # early exit once validation hits this

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1 or self.learning_rate <= 0 or self.patience < 1:
            raise ValueError("training hyperparameters must be positive")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [genres, genres], rows true, columns predicted
    genre_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def macro_accuracy(self) -> float:
        """Mean per-genre recall over genres that appear in the rows."""
        row_sums = self.counts.sum(axis=1)
        present = row_sums > 0
        if not present.any():
            return 0.0
        recalls = np.diag(self.counts)[present] / row_sums[present]
        return float(recalls.mean())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.genre_names != other.genre_names:
            raise ValueError("confusion matrices cover different genres")
        return ConfusionMatrix(self.counts + other.counts, self.genre_names)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["genre"] + self.genre_names)
            for name, row in zip(self.genre_names, self.counts):
                writer.writerow([name] + [int(v) for v in row])

    @classmethod
    def read_csv(cls, path) -> "ConfusionMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:]
        counts = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
        return cls(counts=counts, genre_names=names)


def stratified_kfold(index: DatasetIndex, k: int = 6, seed: int = 0) -> FoldPlan:
    """Shuffle each genre with a seeded generator and deal all tracks
    round-robin into k folds with a pointer that runs on across genres,
    so both per-genre and overall fold sizes differ by at most one."""
    if k < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, entry in enumerate(index.entries):
        by_label.setdefault(entry.label, []).append(i)
    for label, members in sorted(by_label.items()):
        if len(members) < k:
            raise GenreTooSmall(
                f"genre {index.genre_names[label]} has {len(members)} tracks, needs >= {k}"
            )
    folds: list[list[int]] = [[] for _ in range(k)]
    pointer = 0
    for label in sorted(by_label):
        members = np.asarray(by_label[label])
        for i in rng.permutation(len(members)):
            folds[pointer % k].append(int(members[i]))
            pointer += 1
    return FoldPlan(folds=folds, seed=seed)


def confusion_from_predictions(truths, predictions, genre_names) -> ConfusionMatrix:
    n = len(genre_names)
    counts = np.zeros((n, n), dtype=np.int64)
    for t, p in zip(truths, predictions):
        counts[t, p] += 1
    return ConfusionMatrix(counts=counts, genre_names=list(genre_names))


def predict(params: ModelParams, tokens) -> int:
    logits = forward(tokens, params).logits.data
    return int(np.argmax(logits))  # first (lowest) index wins ties


def evaluate(params: ModelParams, entries: list[DatasetEntry], genre_names,
             loader: TokenLoader) -> ConfusionMatrix:
    if not entries:
        raise ValueError("evaluation set is empty")
    truths, preds = [], []
    for entry in entries:
        truths.append(entry.label)
        preds.append(predict(params, loader.tokens(entry)))
    return confusion_from_predictions(truths, preds, genre_names)


def _validation_pass(params, entries, loader):
    losses, hits = [], 0
    for entry in entries:
        out = forward(loader.tokens(entry), params)
        losses.append(T.cross_entropy(out.logits, entry.label).item())
        if int(np.argmax(out.logits.data)) == entry.label:
            hits += 1
    return float(np.mean(losses)), hits / len(entries)


def fit_model(model_cfg: ModelConfig, train_entries, val_entries, cfg: TrainConfig,
              loader: TokenLoader, fold: int = 0):
    """Adam-train on train_entries, track val loss, return the best params.

    Mini-batches are drawn in seeded shuffled order; early stopping keeps
    the parameters with the lowest validation loss (patience epochs).
    Returns (best ModelParams, list of per-epoch log dicts).
    """
    if not train_entries or not val_entries:
        raise ValueError("training and validation sets must be non-empty")
    seeds = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(fold,))
    params = init_params(model_cfg, seeds)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(fold, 1)))

    best = params.copy()
    best_loss = np.inf
    stale = 0
    step = 0
    logs = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_entries))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_entries[i] for i in order[start:start + cfg.batch_size]]
            for entry in batch:
                with Tape() as tape:
                    out = forward(loader.tokens(entry), params)
                    loss = T.cross_entropy(out.logits, entry.label)
                    backward(T.scale(loss, 1.0 / len(batch)), tape)
                epoch_losses.append(loss.item())
            if not np.isfinite(epoch_losses[-len(batch):]).all():
                raise NonFiniteLoss(f"fold {fold} epoch {epoch}: loss diverged")
            step += 1
            adam_step(params.parameters(), lr=cfg.learning_rate, t=step)
        val_loss, val_accuracy = _validation_pass(params, val_entries, loader)
        logs.append({
            "fold": fold,
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": val_loss,
            "val_accuracy": val_accuracy,
        })
        if val_loss < best_loss:
            best_loss = val_loss
            best = params.copy()
            stale = 0
        else:
            stale += 1
        if cfg.stop_accuracy is not None and val_accuracy >= cfg.stop_accuracy:
            return params.copy(), logs
        if stale >= cfg.patience:
            break
    return best, logs


def train_fold(index: DatasetIndex, plan: FoldPlan, fold: int, cfg: TrainConfig,
               model_cfg: ModelConfig | None = None, loader: TokenLoader | None = None):
    """Train on every fold but `fold`, validating on the held-out one."""
    model_cfg = model_cfg or ModelConfig(class_count=len(index.genre_names))
    loader = loader or TokenLoader()
    train_entries = [index.entries[i] for i in plan.train_indices(fold)]
    val_entries = [index.entries[i] for i in plan.folds[fold]]
    return fit_model(model_cfg, train_entries, val_entries, cfg, loader, fold=fold)


@dataclass
class CrossValidationResult:
    matrix: ConfusionMatrix
    fold_accuracies: list[float]
    fold_params: list[ModelParams]
    plan: FoldPlan
    logs: list[dict] = field(default_factory=list)


def cross_validate(index: DatasetIndex, cfg: TrainConfig, k: int = 6,
                   model_cfg: ModelConfig | None = None,
                   loader: TokenLoader | None = None) -> CrossValidationResult:
    """All k folds; the aggregate matrix sums the per-fold matrices, so
    every track is counted exactly once (as a validation item)."""
    model_cfg = model_cfg or ModelConfig(class_count=len(index.genre_names))
    loader = loader or TokenLoader()
    plan = stratified_kfold(index, k=k, seed=cfg.seed)
    matrix = None
    accuracies, all_params, logs = [], [], []
    for fold in range(k):
        params, fold_logs = train_fold(index, plan, fold, cfg, model_cfg, loader)
        logs.extend(fold_logs)
        fold_matrix = evaluate(params, [index.entries[i] for i in plan.folds[fold]],
                               index.genre_names, loader)
        matrix = fold_matrix if matrix is None else matrix + fold_matrix
        accuracies.append(fold_matrix.accuracy)
        all_params.append(params)
    return CrossValidationResult(matrix=matrix, fold_accuracies=accuracies,
                                 fold_params=all_params, plan=plan, logs=logs)
