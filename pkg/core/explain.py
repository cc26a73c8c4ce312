#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Prediction Explanations
تفسير التنبؤات

Feature×feature attention maps aggregated over heads and instances, and
local surrogate (LIME) explanations of single predictions.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from lime.lime_base import LimeBase
from sklearn.linear_model import Ridge

from .checkpoint import Checkpoint
from .data import DomainDataset, NumericStats, TabularSchema
from .errors import (
    ConfigError,
    DegeneratePerturbationError,
    EmptyFilterSelectionError,
    SchemaError,
    ShapeError,
)
from .evaluation import encoded_for

logger = logging.getLogger(__name__)

IMPORTANCE_RULE = "column_sum"

PredictFn = Callable[[np.ndarray], np.ndarray]


class InstanceFilter(Enum):
    ALL = "all"
    DEFAULTING = "defaulting"
    NON_DEFAULTING = "non_defaulting"


@dataclass
class AttentionMap:
    feature_names: List[str]
    matrix: np.ndarray
    filter: InstanceFilter = InstanceFilter.ALL
    instances: int = 0

    def importance(self) -> np.ndarray:
        """Total attention each feature receives (column sums)."""
        return self.matrix.sum(axis=0)

    def top_features(self, k: int = 3) -> List[str]:
        order = np.argsort(-self.importance(), kind="stable")[:k]
        return [self.feature_names[i] for i in order]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "features": list(self.feature_names),
            "matrix": self.matrix.tolist(),
            "aggregation": {"heads": "mean", "blocks": "mean", "filter": self.filter.value,
                            "instances": self.instances},
            "importance": self.importance().tolist(),
            "importance_rule": IMPORTANCE_RULE,
            "top_features": self.top_features(),
        }


def attention_map(checkpoint: Checkpoint, dataset: DomainDataset,
                  filter: Union[InstanceFilter, str] = InstanceFilter.ALL) -> AttentionMap:  # noqa: A002
    """Mean head-averaged attention over the selected instances."""
    instance_filter = InstanceFilter(filter)
    if instance_filter is InstanceFilter.ALL:
        rows = np.arange(dataset.n_rows)
    else:
        labels = dataset.evaluation_labels()
        wanted = 1 if instance_filter is InstanceFilter.DEFAULTING else 0
        rows = np.flatnonzero(labels == wanted)
    if rows.size == 0:
        raise EmptyFilterSelectionError(f"Filter '{instance_filter.value}' selected no instances")
    maps = checkpoint.model.attention_maps(encoded_for(checkpoint, dataset)[rows])
    logger.info(f"Attention map over {rows.size} instances (filter {instance_filter.value})")
    return AttentionMap(checkpoint.schema.feature_names, maps.mean(axis=0), instance_filter, int(rows.size))


def attention_diff(defaulting_map: AttentionMap, non_defaulting_map: AttentionMap) -> np.ndarray:
    """Elementwise difference; positive cells lean towards defaulting."""
    if defaulting_map.matrix.shape != non_defaulting_map.matrix.shape:
        raise ShapeError(f"attention_diff: shapes {defaulting_map.matrix.shape} and "
                         f"{non_defaulting_map.matrix.shape} differ")
    if defaulting_map.feature_names != non_defaulting_map.feature_names:
        raise ShapeError("attention_diff: feature orders differ")
    return defaulting_map.matrix - non_defaulting_map.matrix


@dataclass(frozen=True)
class TrainingStats:
    """Training marginals used to perturb instances."""

    numeric: Mapping[str, NumericStats]
    categorical: Mapping[str, Sequence[float]]

    @classmethod
    def from_dataset(cls, dataset: DomainDataset, numeric: Optional[Mapping[str, NumericStats]] = None) -> "TrainingStats":
        freqs = {}
        for spec in dataset.schema.categorical_features:
            counts = dataset.raw[spec.name].value_counts().reindex(spec.categories, fill_value=0)
            freqs[spec.name] = (counts / max(int(counts.sum()), 1)).tolist()
        return cls(dict(numeric if numeric is not None else dataset.stats), freqs)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TrainingStats":
        return cls({k: NumericStats(float(v["mean"]), float(v["std"])) for k, v in doc["numeric"].items()},
                   {k: [float(p) for p in v] for k, v in doc["categorical"].items()})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "numeric": {k: {"mean": s.mean, "std": s.std} for k, s in sorted(self.numeric.items())},
            "categorical": {k: list(v) for k, v in sorted(self.categorical.items())},
        }


@dataclass(frozen=True)
class LimeConfig:
    n_perturbations: int = 5000
    kernel_width: Optional[float] = None
    categorical_resample_prob: float = 0.5
    ridge_alpha: float = 1.0
    num_features: int = 10
    fidelity_threshold: float = 0.5

    def __post_init__(self):
        if self.n_perturbations < 100:
            raise ConfigError(f"n_perturbations must be >= 100, got {self.n_perturbations}")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ConfigError(f"kernel_width must be positive, got {self.kernel_width}")
        if not 0.0 <= self.categorical_resample_prob <= 1.0:
            raise ConfigError("categorical_resample_prob must lie in [0, 1]")
        if self.ridge_alpha < 0 or self.num_features < 1:
            raise ConfigError("ridge_alpha must be >= 0 and num_features >= 1")

    def width_for(self, schema: TabularSchema) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * np.sqrt(schema.encoded_width)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_perturbations": self.n_perturbations,
            "kernel_width": self.kernel_width,
            "categorical_resample_prob": self.categorical_resample_prob,
            "ridge_alpha": self.ridge_alpha,
            "num_features": self.num_features,
            "fidelity_threshold": self.fidelity_threshold,
        }


@dataclass
class Explanation:
    instance_id: str
    probability: float
    weights: List[Tuple[str, float]]
    intercept: float
    r2: float
    kernel_width: float
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "probability": self.probability,
            "weights": [{"feature": f, "weight": w} for f, w in self.weights],
            "intercept": self.intercept,
            "r2": self.r2,
            "kernel_width": self.kernel_width,
            "config_echo": dict(self.config),
        }


@dataclass
class Neighbourhood:
    """Perturbed samples around one instance; row 0 is the instance itself."""

    encoded: np.ndarray
    interpretable: np.ndarray
    distances: np.ndarray


class LimeExplainer:
    """Local surrogate explanations over the encoded feature space."""

    def __init__(self, schema: TabularSchema, stats: TrainingStats, predict_fn: PredictFn,
                 cfg: Optional[LimeConfig] = None):
        self.schema = schema
        self.stats = stats
        self.predict_fn = predict_fn
        self.cfg = cfg or LimeConfig()
        self.layout = schema.layout()
        missing = [s.name for s in schema.categorical_features if s.name not in stats.categorical]
        if missing:
            raise SchemaError(f"Training marginals missing for: {missing}")

    def perturb(self, instance: np.ndarray, rng: np.random.Generator) -> Neighbourhood:
        instance = np.asarray(instance, dtype=np.float64).ravel()
        if instance.size != self.schema.encoded_width:
            raise SchemaError(f"Instance has width {instance.size}, schema expects {self.schema.encoded_width}")
        n = self.cfg.n_perturbations
        encoded = np.tile(instance, (n, 1))
        interpretable = np.empty((n, self.schema.token_count))
        squared = np.zeros(n)
        for f, piece in enumerate(self.layout):
            spec = piece.spec
            if spec.is_categorical:
                current = int(np.argmax(instance[piece.start:piece.stop]))
                resample = rng.random(n) < self.cfg.categorical_resample_prob
                drawn = rng.choice(spec.width, size=n, p=np.asarray(self.stats.categorical[spec.name]))
                codes = np.where(resample, drawn, current)
                codes[0] = current
                block = np.zeros((n, spec.width))
                block[np.arange(n), codes] = 1.0
                encoded[:, piece.start:piece.stop] = block
                same = (codes == current).astype(np.float64)
                interpretable[:, f] = same
                squared += 1.0 - same
            else:
                z = instance[piece.start] + rng.standard_normal(n)
                z[0] = instance[piece.start]
                encoded[:, piece.start] = z
                interpretable[:, f] = z
                squared += (z - instance[piece.start]) ** 2
        return Neighbourhood(encoded, interpretable, np.sqrt(squared))

    def explain(self, instance: np.ndarray, seed: int, instance_id: str = "0") -> Explanation:
        rng = np.random.default_rng(seed)
        hood = self.perturb(instance, rng)
        if np.all(hood.interpretable == hood.interpretable[0]):
            raise DegeneratePerturbationError("All perturbed neighbours equal the instance")
        scores = np.asarray(self.predict_fn(hood.encoded), dtype=np.float64).reshape(-1)
        width = self.cfg.width_for(self.schema)

        def kernel(d):
            return np.exp(-(d ** 2) / width ** 2)

        base = LimeBase(kernel, verbose=False, random_state=seed)
        k = min(self.cfg.num_features, self.schema.token_count)
        intercept, weights, r2, _ = base.explain_instance_with_data(
            hood.interpretable, scores.reshape(-1, 1), hood.distances, 0, k,
            feature_selection="forward_selection",
            model_regressor=Ridge(alpha=self.cfg.ridge_alpha, fit_intercept=True, random_state=seed),
        )
        names = self.schema.feature_names
        ranked = sorted(((names[i], float(w)) for i, w in weights), key=lambda item: -abs(item[1]))
        return Explanation(instance_id, float(scores[0]), ranked, float(intercept), float(r2), float(width),
                           self.cfg.to_dict())


def lime_explain(checkpoint: Checkpoint, instance: Union[np.ndarray, pd.Series], training_stats: TrainingStats,
                 cfg: Optional[LimeConfig] = None, seed: int = 0, instance_id: str = "0") -> Explanation:
    """Explain the defaulting probability the checkpoint assigns to one encoded row."""
    explainer = LimeExplainer(checkpoint.schema, training_stats, checkpoint.model.predict_proba, cfg)
    explanation = explainer.explain(np.asarray(instance, dtype=np.float64), seed, instance_id)
    logger.info(f"Explained instance {instance_id}: p={explanation.probability:.4f}, R² {explanation.r2:.3f}")
    return explanation


def fidelity_summary(explanations: Sequence[Explanation], threshold: float = 0.5) -> Dict[str, Any]:
    """Share of explanations whose local R² reaches the threshold."""
    passing = sum(1 for e in explanations if e.r2 >= threshold)
    total = len(explanations)
    return {"threshold": threshold, "explained": total, "passing": passing,
            "fraction": passing / total if total else 0.0}
