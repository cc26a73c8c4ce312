#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Model Training
تدريب النموذج

Minibatch SGD over paired source/synthetic-target batches with an
exponentially decaying learning rate, early stopping on the source
validation loss, and a λ sweep that runs independent trainings in parallel.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .app_config import default_worker_count
from .checkpoint import Checkpoint
from .data import DomainDataset
from .errors import ConfigError, EmptyDatasetError, NonFiniteError, NonFiniteLossError, SchemaError
from .evaluation import evaluate, score_predictions
from .losses import LambdaMode, LossBreakdown, LossConfig, total_loss, weighted_bce
from .model import ModelConfig, TransCORALNet, build_model
from .numcore import GradTape, ParameterSet, Tensor

logger = logging.getLogger(__name__)

EPOCH_VARYING = LambdaMode.EPOCH_VARYING.value


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 250
    batch_size: int = 256
    initial_lr: float = 0.1
    lr_decay_gamma: float = 0.96
    early_stop_patience: int = 15
    momentum: float = 0.0
    min_delta: float = 0.0
    train_fraction: float = 0.8
    seed: int = 0
    threshold: float = 0.5
    loss: LossConfig = field(default_factory=LossConfig)
    model: Optional[ModelConfig] = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.early_stop_patience < 1:
            raise ConfigError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if self.initial_lr <= 0 or not 0 < self.lr_decay_gamma <= 1:
            raise ConfigError("initial_lr must be > 0 and lr_decay_gamma in (0, 1]")
        if not 0 <= self.momentum < 1 or self.min_delta < 0:
            raise ConfigError("momentum must lie in [0, 1) and min_delta be >= 0")

    @classmethod
    def from_sections(cls, train: Mapping[str, Any], loss: Mapping[str, Any],
                      model: Optional[ModelConfig], seed: int, threshold: float = 0.5) -> "TrainConfig":
        return cls(**dict(train), seed=seed, threshold=threshold,
                   loss=LossConfig.from_dict(loss), model=model)

    def learning_rate(self, epoch: int) -> float:
        return self.initial_lr * self.lr_decay_gamma ** epoch

    def to_dict(self) -> Dict[str, Any]:
        doc = {k: v for k, v in asdict(self).items() if k not in ("loss", "model")}
        doc["loss"] = self.loss.to_dict()
        doc["model"] = self.model.to_dict() if self.model else None
        return doc


@dataclass
class EpochRecord:
    epoch: int
    lam: float
    lr: float
    train_weighted: float
    train_coral: float
    train_total: float
    val_loss: float
    val_recall: float
    val_f1: float
    batches: int

    def to_dict(self) -> Dict[str, Any]:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        return doc


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = -1

    @property
    def best_record(self) -> EpochRecord:
        return self.records[self.best_epoch]

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) for r in self.records]
        return "\n".join(lines) + "\n"

    def save_jsonl(self, path: str):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_jsonl())
        logger.info(f"Training history written to: {path}")

    def summary(self) -> Dict[str, Any]:
        return {"stop_reason": self.stop_reason, "best_epoch": self.best_epoch,
                "epochs": len(self.records), "best_val_loss": self.best_record.val_loss}


class EarlyStopping:
    """
    Stop training when the validation loss has not improved by more than
    `min_delta` for `patience` consecutive epochs.
    """

    def __init__(self, patience: int = 15, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.counter = 0
        self.best_loss: Optional[float] = None
        self.early_stop = False

    def __call__(self, val_loss: float) -> bool:
        """Record one epoch; return True when it is the new best."""
        if self.best_loss is None or self.best_loss - val_loss > self.min_delta:
            self.best_loss = val_loss
            self.counter = 0
            return True
        self.counter += 1
        logger.debug(f"Early stopping counter {self.counter} of {self.patience}")
        if self.counter >= self.patience:
            self.early_stop = True
        return False


def sgd_step(params: ParameterSet, grads: Mapping[str, np.ndarray], lr: float,
             velocity: Optional[Dict[str, np.ndarray]] = None, momentum: float = 0.0):
    """θ ← θ - lr·g (heavy-ball velocity when momentum > 0)."""
    for name in params.names():
        step = grads[name]
        if momentum > 0.0 and velocity is not None:
            step = momentum * velocity.get(name, np.zeros_like(step)) + step
            velocity[name] = step
        params.assign(name, params[name].value - lr * step)


def batch_loss(model: TransCORALNet, x_s: np.ndarray, y_s: np.ndarray, x_t: np.ndarray,
               epoch: int, loss_cfg: LossConfig, total_epochs: int) -> LossBreakdown:
    out_s, out_t = model.forward_two_stream(x_s, x_t, training=True)
    return total_loss(out_s.probabilities, y_s, out_s.features, out_t.features, epoch, loss_cfg, total_epochs)


def train_step(model: TransCORALNet, x_s: np.ndarray, y_s: np.ndarray, x_t: np.ndarray,
               epoch: int, cfg: TrainConfig, lr: float,
               velocity: Optional[Dict[str, np.ndarray]] = None) -> LossBreakdown:
    """Forward both streams, back-propagate the total loss, update in place."""
    with GradTape() as tape:
        breakdown = batch_loss(model, x_s, y_s, x_t, epoch, cfg.loss, cfg.max_epochs)
    grads = tape.gradient(breakdown.total_tensor, model.params)
    sgd_step(model.params, grads, lr, velocity, cfg.momentum)
    return breakdown


def validation_loss(model: TransCORALNet, x_val: np.ndarray, y_val: np.ndarray,
                    loss_cfg: LossConfig) -> Tuple[float, np.ndarray]:
    """Weighted cross-entropy on the validation rows (no alignment term)."""
    probabilities = model.predict_proba(x_val)
    loss = weighted_bce(Tensor(probabilities), y_val, loss_cfg.minority_weight, loss_cfg.clamp_eps)
    return loss.item(), probabilities


def _epoch_batches(rng: np.random.Generator, n_source: int, n_target: int,
                   batch_size: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    order = rng.permutation(n_source)
    chunks = [order[i:i + batch_size] for i in range(0, n_source, batch_size)]
    # the alignment loss needs at least two rows per batch
    chunks = [c for c in chunks if len(c) >= 2]
    needed = int(np.sum([len(c) for c in chunks]))
    target_order = rng.permutation(n_target)
    if n_target < needed:
        target_order = np.concatenate([target_order, rng.integers(0, n_target, size=needed - n_target)])
    pairs, offset = [], 0
    for chunk in chunks:
        pairs.append((chunk, target_order[offset:offset + len(chunk)]))
        offset += len(chunk)
    return pairs


def train(source_train: DomainDataset, source_val: DomainDataset, synthetic_target: DomainDataset,
          cfg: TrainConfig, tag: str = "") -> Tuple[Checkpoint, TrainHistory]:
    """Train a model; return the best-validation-epoch checkpoint and the history."""
    for name, ds in (("source_train", source_train), ("source_val", source_val),
                     ("synthetic_target", synthetic_target)):
        if ds.n_rows == 0:
            raise EmptyDatasetError(f"{name} has no rows")
        if ds.schema != source_train.schema:
            raise SchemaError(f"{name} uses a different schema")
    if source_train.n_rows < 2:
        raise EmptyDatasetError("source_train needs at least 2 rows to form a batch")

    x_s, y_s = source_train.require_encoded(), source_train.training_labels()
    x_val, y_val = source_val.require_encoded(), source_val.training_labels()
    x_t = synthetic_target.require_encoded()

    model_cfg = cfg.model or ModelConfig(token_count=source_train.schema.token_count)
    model = build_model(model_cfg, source_train.schema, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    stopper = EarlyStopping(cfg.early_stop_patience, cfg.min_delta)
    history = TrainHistory()
    best_params = model.params.copy()
    velocity: Dict[str, np.ndarray] = {}
    prefix = f"[{tag}] " if tag else ""

    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate(epoch)
        breakdowns = []
        for b, (s_idx, t_idx) in enumerate(_epoch_batches(rng, len(x_s), len(x_t), cfg.batch_size)):
            try:
                breakdown = train_step(model, x_s[s_idx], y_s[s_idx], x_t[t_idx], epoch, cfg, lr, velocity)
            except NonFiniteError:
                raise NonFiniteLossError(epoch, b, float("nan")) from None
            if not np.isfinite(breakdown.total):
                raise NonFiniteLossError(epoch, b, breakdown.total)
            breakdowns.append(breakdown)

        val_loss, val_probs = validation_loss(model, x_val, y_val, cfg.loss)
        _, val_report = score_predictions(val_probs, y_val, cfg.threshold)
        record = EpochRecord(
            epoch=epoch,
            lam=breakdowns[0].lam,
            lr=lr,
            train_weighted=float(np.mean([b.weighted for b in breakdowns])),
            train_coral=float(np.mean([b.coral for b in breakdowns])),
            train_total=float(np.mean([b.total for b in breakdowns])),
            val_loss=val_loss,
            val_recall=val_report.recall,
            val_f1=val_report.f1,
            batches=len(breakdowns),
        )
        history.records.append(record)
        logger.info(f"{prefix}Epoch {epoch + 1}/{cfg.max_epochs}: lambda {record.lam:.4f}, "
                    f"loss {record.train_total:.5f} (weighted {record.train_weighted:.5f}, "
                    f"coral {record.train_coral:.3e}), val loss {val_loss:.5f}, "
                    f"val recall {val_report.recall:.4f}, val F1 {val_report.f1:.4f}, lr {lr:.5f}")

        if stopper(val_loss):
            best_params = model.params.copy()
            history.best_epoch = epoch
        if stopper.early_stop:
            history.stop_reason = "early_stopping"
            break
    else:
        history.stop_reason = "max_epochs"

    logger.info(f"{prefix}Training stopped ({history.stop_reason}) after {len(history.records)} epochs; "
                f"best epoch {history.best_epoch + 1} with val loss {history.best_record.val_loss:.5f}")
    model.params = best_params
    metadata = {
        "best_epoch": history.best_epoch,
        "stop_reason": history.stop_reason,
        "best_val_loss": history.best_record.val_loss,
        "train_config": cfg.to_dict(),
    }
    return Checkpoint(model, dict(source_train.stats), metadata), history


GridPoint = Union[float, str]


def _loss_for(point: GridPoint, base: LossConfig) -> LossConfig:
    if point == EPOCH_VARYING:
        return replace(base, lambda_mode=LambdaMode.EPOCH_VARYING)
    if isinstance(point, bool) or not isinstance(point, (int, float)):
        raise ConfigError(f"Sweep grid entries must be numbers or {EPOCH_VARYING!r}, got {point!r}")
    return replace(base, lambda_mode=LambdaMode.FIXED, lambda_value=float(point))


@dataclass
class SweepRow:
    lam: GridPoint
    best_val_loss: float
    best_epoch: int
    stop_reason: str
    target_recall: Optional[float] = None
    target_f1: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"lambda": self.lam, "best_val_loss": self.best_val_loss,
                "best_epoch": self.best_epoch, "stop_reason": self.stop_reason,
                "target_recall": self.target_recall, "target_f1": self.target_f1}


def lambda_sweep(source_train: DomainDataset, source_val: DomainDataset, synthetic_target: DomainDataset,
                 cfg: TrainConfig, grid: Sequence[GridPoint],
                 max_workers: Optional[int] = None,
                 labeled_target: Optional[DomainDataset] = None) -> List[SweepRow]:
    """One training per grid point, all with the same seed; rows follow grid order.

    With `labeled_target` each best checkpoint is also scored on it.
    """
    if not grid:
        raise ConfigError("Sweep grid must not be empty")
    configs = [replace(cfg, loss=_loss_for(point, cfg.loss)) for point in grid]

    def run(job: Tuple[GridPoint, TrainConfig]) -> SweepRow:
        point, job_cfg = job
        checkpoint, history = train(source_train, source_val, synthetic_target, job_cfg, tag=f"lambda={point}")
        row = SweepRow(point, history.best_record.val_loss, history.best_epoch, history.stop_reason)
        if labeled_target is not None:
            _, report = evaluate(checkpoint, labeled_target, job_cfg.threshold)
            row.target_recall, row.target_f1 = report.recall, report.f1
        return row

    jobs = list(zip(grid, configs))
    workers = min(max_workers or default_worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    logger.info(f"Lambda sweep finished: {len(rows)} runs")
    return rows
