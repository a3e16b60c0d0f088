"""Mini-batch training with early stopping and best-weight restoration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..layertree import OptimizerKind
from ..objectives import ObjectiveVector
from ..preprocess import DataPair
from .graph import NetworkGraph
from .optim import Optimizer

EVAL_CHUNK = 512


@dataclass
class TrainConfig:
    batch_size: int = 8
    optimizer: OptimizerKind = OptimizerKind.ADAM
    patience: int = 5
    max_epochs: int = 30
    lr: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int = 0
    best_epoch: int = -1
    train_loss_curve: list[float] = field(default_factory=list)
    val_loss_curve: list[float] = field(default_factory=list)
    restored: bool = False
    diverged: bool = False
    timed_out: bool = False


def _batched_loss(net: NetworkGraph, x: np.ndarray, y: np.ndarray) -> float:
    total = 0.0
    for start in range(0, len(y), EVAL_CHUNK):
        bx, by = x[start:start + EVAL_CHUNK], y[start:start + EVAL_CHUNK]
        total += net.loss(bx, by) * len(by)
    return total / len(y)


def _batched_predict(net: NetworkGraph, x: np.ndarray) -> np.ndarray:
    parts = [net.predict(x[s:s + EVAL_CHUNK]) for s in range(0, len(x), EVAL_CHUNK)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def train(net: NetworkGraph, data: DataPair, cfg: TrainConfig, seed: int,
          deadline: Optional[float] = None,
          val_loss_fn: Optional[Callable[[NetworkGraph, DataPair, int], float]] = None,
          ) -> TrainReport:
    """Train ``net`` in place; stop early on a stalled validation loss.

    Shuffling and dropout are driven by ``seed`` only, so identical inputs
    give identical trained networks. Validation loss is checked once per
    epoch; after ``patience`` consecutive epochs without improvement the loop
    stops and the best epoch's weights are restored. ``deadline`` (a
    ``time.monotonic`` value) is honored at epoch boundaries. ``val_loss_fn``
    overrides the validation measurement, which keeps the stopping logic
    testable in isolation.
    """
    if len(data.train.y) == 0 or len(data.validation.y) == 0:
        raise ValueError("training needs non-empty train and validation splits")
    rng = np.random.default_rng(seed)
    report = TrainReport()
    best_val = np.inf
    best_snapshot = None
    bad_streak = 0
    x_train, y_train = data.train.x, data.train.y
    n = len(y_train)
    optimizer = Optimizer(cfg.optimizer, cfg.lr)

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(x_train[take], y_train[take], rng=rng)
            if not np.isfinite(loss):
                report.diverged = True
                break
            optimizer.step(net.trainable_arrays(), grads)
            epoch_loss += loss * len(take)
        if report.diverged:
            break
        report.train_loss_curve.append(epoch_loss / n)

        if val_loss_fn is not None:
            val_loss = float(val_loss_fn(net, data, epoch))
        else:
            val_loss = _batched_loss(net, data.validation.x, data.validation.y)
        if not np.isfinite(val_loss):
            report.diverged = True
            break
        report.val_loss_curve.append(val_loss)
        report.epochs_run = epoch + 1

        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            best_snapshot = net.get_state()
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak >= cfg.patience:
                break
        if deadline is not None and time.monotonic() >= deadline:
            report.timed_out = True
            break

    if best_snapshot is not None:
        net.set_state(best_snapshot)
        report.restored = True
    return report


def evaluate_objectives(net: NetworkGraph, data: DataPair) -> ObjectiveVector:
    """Misclassification rate on the test split plus trainable-parameter count."""
    preds = _batched_predict(net, data.test.x)
    error = float((preds != data.test.y).mean()) if len(preds) else 1.0
    return ObjectiveVector(error, net.param_count)
