#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Model Evaluation
تقييم النموذج

Minority-class (defaulting) recall, precision and F1, per-shift-group
reports and the relative decreasing rates between training and testing.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .checkpoint import Checkpoint
from .data import DomainDataset, ShiftGroups, encode_frame
from .errors import (
    CircleMismatchError,
    EmptyDatasetError,
    LengthMismatchError,
    SchemaError,
    ZeroTestingMetricError,
)

logger = logging.getLogger(__name__)

POSITIVE_CLASS = "defaulting"


def _binary_pair(predicted, labels) -> Tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted).astype(bool).ravel().astype(np.int64)
    labels = np.asarray(labels).astype(bool).ravel().astype(np.int64)
    if predicted.size != labels.size:
        raise LengthMismatchError(f"{predicted.size} predictions for {labels.size} labels")
    return predicted, labels


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, predicted, labels) -> "ConfusionCounts":
        predicted, labels = _binary_pair(predicted, labels)
        if labels.size == 0:
            return cls(0, 0, 0, 0)
        tn, fp, fn, tp = confusion_matrix(labels, predicted, labels=[0, 1]).ravel()
        return cls(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))

    def to_dict(self) -> Dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass
class MetricReport:
    """Scores on the defaulting class; group rows carry size, mean KL and rates."""

    recall: float
    precision: float
    f1: float
    counts: ConfusionCounts
    flags: List[str] = field(default_factory=list)
    size: Optional[int] = None
    mean_kl: Optional[float] = None
    rates: Optional[Dict[str, Optional[float]]] = None

    @classmethod
    def from_predictions(cls, predicted, labels) -> "MetricReport":
        counts = ConfusionCounts.from_predictions(predicted, labels)
        flags = ["no-positives"] if counts.tp + counts.fn == 0 else []
        if counts.total == 0:
            return cls(0.0, 0.0, 0.0, counts, flags)
        predicted, labels = _binary_pair(predicted, labels)
        # undefined ratios (no positives, no positive predictions) score 0
        precision, recall, f1, _ = precision_recall_fscore_support(
            labels, predicted, pos_label=1, average="binary", zero_division=0)
        return cls(float(recall), float(precision), float(f1), counts, flags)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "class": POSITIVE_CLASS,
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "counts": self.counts.to_dict(),
            "flags": list(self.flags),
        }
        if self.size is not None:
            doc["size"] = self.size
        if self.mean_kl is not None:
            doc["mean_kl"] = self.mean_kl
        if self.rates is not None:
            doc["rates"] = dict(self.rates)
        return doc


def classify(probabilities, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(probabilities) >= threshold


def score_predictions(probabilities, labels, threshold: float = 0.5) -> Tuple[ConfusionCounts, MetricReport]:
    report = MetricReport.from_predictions(classify(probabilities, threshold), labels)
    return report.counts, report


def encoded_for(checkpoint: Checkpoint, dataset: DomainDataset) -> np.ndarray:
    """Encode raw rows with the checkpoint's training statistics."""
    if dataset.schema.digest() != checkpoint.schema.digest():
        raise SchemaError("Dataset schema differs from the checkpoint schema")
    return encode_frame(dataset.raw, checkpoint.schema, checkpoint.stats)


def evaluate(checkpoint: Checkpoint, dataset: DomainDataset,
             threshold: float = 0.5) -> Tuple[ConfusionCounts, MetricReport]:
    labels = dataset.evaluation_labels()
    if dataset.n_rows == 0:
        raise EmptyDatasetError("Cannot evaluate on an empty dataset")
    probabilities = checkpoint.model.predict_proba(encoded_for(checkpoint, dataset))
    counts, report = score_predictions(probabilities, labels, threshold)
    logger.info(f"Evaluated {counts.total} rows: recall {report.recall:.4f}, "
                f"precision {report.precision:.4f}, F1 {report.f1:.4f}")
    return counts, report


def evaluate_groups(checkpoint: Checkpoint, target: DomainDataset, groups: ShiftGroups,
                    threshold: float = 0.5) -> List[MetricReport]:
    """One report per shift group, largest group first."""
    labels = target.evaluation_labels()
    known = set(target.circles())
    probabilities = None
    reports = []
    for group in sorted(groups.groups, key=lambda g: -g.size):
        unknown = sorted(set(group.circle_ids) - known)
        if unknown:
            raise CircleMismatchError(f"Group {group.size} names circles missing from the data: {unknown[:5]}")
        if probabilities is None:
            probabilities = checkpoint.model.predict_proba(encoded_for(checkpoint, target))
        mask = np.isin(target.circle_ids, list(group.circle_ids))
        _, report = score_predictions(probabilities[mask], labels[mask], threshold)
        reports.append(replace(report, size=group.size, mean_kl=group.mean_kl))
        logger.info(f"Group {group.size}: recall {report.recall:.4f}, F1 {report.f1:.4f}")
    return reports


def decreasing_rates(training: MetricReport, testing: MetricReport) -> Dict[str, float]:
    """(training - testing) / testing for recall and F1."""
    if testing.recall <= 0 or testing.f1 <= 0:
        raise ZeroTestingMetricError(f"Decreasing rate undefined: testing recall {testing.recall}, "
                                     f"F1 {testing.f1}")
    return {
        "recall": (training.recall - testing.recall) / testing.recall,
        "f1": (training.f1 - testing.f1) / testing.f1,
    }


def rates_or_none(training: MetricReport, testing: MetricReport) -> Dict[str, Optional[float]]:
    try:
        return dict(decreasing_rates(training, testing))
    except ZeroTestingMetricError as e:
        logger.warning(f"{e}; rates reported as null")
        return {"recall": None, "f1": None}


def report_from_dict(doc: Dict[str, Any]) -> MetricReport:
    counts = ConfusionCounts(**doc["counts"])
    return MetricReport(float(doc["recall"]), float(doc["precision"]), float(doc["f1"]), counts,
                        list(doc.get("flags", [])))


@dataclass
class MetricTable:
    """Training, validation and shift-group scores of one model side by side."""

    training: Optional[MetricReport]
    validation: Optional[MetricReport]
    target: Optional[MetricReport]
    groups: List[MetricReport] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "training": self.training.to_dict() if self.training else None,
            "validation": self.validation.to_dict() if self.validation else None,
            "target": self.target.to_dict() if self.target else None,
            "groups": [g.to_dict() for g in self.groups],
        }


Scored = Union[DomainDataset, MetricReport]


def _scored(checkpoint: Checkpoint, data: Optional[Scored], threshold: float) -> Optional[MetricReport]:
    if data is None or isinstance(data, MetricReport):
        return data
    return evaluate(checkpoint, data, threshold)[1]


def build_metric_table(checkpoint: Checkpoint, training: Optional[Scored],
                       validation: Optional[Scored] = None,
                       target: Optional[DomainDataset] = None,
                       groups: Optional[ShiftGroups] = None,
                       threshold: float = 0.5) -> MetricTable:
    """
    Score the checkpoint on each split given. Training and validation may be
    datasets or stored reports; rates are taken against the training report.
    """
    train_report = _scored(checkpoint, training, threshold)
    val_report = _scored(checkpoint, validation, threshold)
    target_report = None
    group_reports: List[MetricReport] = []
    if target is not None:
        _, target_report = evaluate(checkpoint, target, threshold)
        if groups is not None:
            group_reports = evaluate_groups(checkpoint, target, groups, threshold)
        if train_report is not None:
            for report in [target_report, *group_reports]:
                report.rates = rates_or_none(train_report, report)
        else:
            logger.info("No training scores available, decreasing rates are skipped")
    return MetricTable(train_report, val_report, target_report, group_reports)
