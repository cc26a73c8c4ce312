#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tabular Domain Data
البيانات الجدولية للمجالين المصدر والهدف

Schema-driven CSV ingestion and encoding, the stratified source split,
KL-divergence shift grouping of target circles and the synthetic
multi-circle benchmark used in place of the proprietary bank data.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import entropy

from .app_config import default_worker_count
from .errors import (
    ConfigError,
    EmptySubsetError,
    GroupSizeError,
    InfeasibleMinorityRateError,
    LabelAccessError,
    MissingColumnError,
    NumericParseError,
    SchemaError,
    TooFewMinorityError,
    UnknownCategoryError,
    UnlabeledDatasetError,
)

logger = logging.getLogger(__name__)

DEFAULT_GROUP_SIZES = (80, 60, 40, 30, 20, 10)

# Feature table of the supply chain credit data: willingness block, then capability block.
DEMO_FEATURES: Tuple[Tuple[str, str], ...] = (
    ("business_scale", "categorical"),
    ("business_nature", "categorical"),
    ("company_type", "categorical"),
    ("status", "categorical"),
    ("technological_enterprise", "categorical"),
    ("government_platform_finance", "categorical"),
    ("prohibited_industry", "categorical"),
    ("listed_company", "categorical"),
    ("small_and_micro_enterprises", "categorical"),
    ("platform_type", "categorical"),
    ("years_relationship_with_bank", "numeric"),
    ("bank_early_warning", "categorical"),
    ("guarantee_type", "categorical"),
    ("revolving_credit_facility", "categorical"),
    ("repayment_method", "categorical"),
    ("rate_adjustment_frequency", "categorical"),
    ("credit_rating", "categorical"),
    ("deposit_balance", "numeric"),
    ("average_daily_deposit_balance", "numeric"),
    ("credit_balance", "numeric"),
    ("average_daily_credit_balance", "numeric"),
)


class FeatureKind(Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class DomainRole(Enum):
    """Which stream a dataset feeds. Only SOURCE labels reach training."""
    SOURCE = "source"
    TARGET = "target"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: FeatureKind
    categories: Tuple[str, ...] = ()

    @property
    def is_categorical(self) -> bool:
        return self.kind is FeatureKind.CATEGORICAL

    @property
    def width(self) -> int:
        return len(self.categories) if self.is_categorical else 1


@dataclass(frozen=True)
class FeatureSlice:
    """Column range one feature occupies in the encoded matrix."""
    spec: FeatureSpec
    start: int
    stop: int


@dataclass(frozen=True)
class TabularSchema:
    """Ordered feature descriptors shared by datasets, model and explainers."""

    features: Tuple[FeatureSpec, ...]
    label_column: Optional[str] = "label"
    circle_column: Optional[str] = "circle"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if len(self.features) < 2:
            raise SchemaError(f"Schema needs at least 2 features, got {len(self.features)}")
        names = [f.name for f in self.features]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SchemaError(f"Duplicate feature names: {duplicates}")
        for spec in self.features:
            if spec.is_categorical:
                if not spec.categories:
                    raise SchemaError(f"Categorical feature {spec.name!r} has no categories")
                if len(set(spec.categories)) != len(spec.categories):
                    raise SchemaError(f"Categorical feature {spec.name!r} lists a category twice")
            elif spec.categories:
                raise SchemaError(f"Numeric feature {spec.name!r} must not list categories")
        reserved = {self.label_column, self.circle_column} - {None}
        if reserved & set(names):
            raise SchemaError(f"Label/circle columns collide with features: {sorted(reserved & set(names))}")

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def categorical_features(self) -> List[FeatureSpec]:
        return [f for f in self.features if f.is_categorical]

    @property
    def numeric_features(self) -> List[FeatureSpec]:
        return [f for f in self.features if not f.is_categorical]

    @property
    def token_count(self) -> int:
        return len(self.features)

    @property
    def encoded_width(self) -> int:
        return int(np.sum([f.width for f in self.features]))

    def feature(self, name: str) -> FeatureSpec:
        for spec in self.features:
            if spec.name == name:
                return spec
        raise SchemaError(f"Unknown feature {name!r}")

    def layout(self) -> List[FeatureSlice]:
        slices, start = [], 0
        for spec in self.features:
            slices.append(FeatureSlice(spec, start, start + spec.width))
            start += spec.width
        return slices

    def to_dict(self) -> Dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind.value, **({"categories": list(f.categories)} if f.is_categorical else {})}
                for f in self.features
            ],
            "label_column": self.label_column,
            "circle_column": self.circle_column,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TabularSchema":
        try:
            features = tuple(
                FeatureSpec(
                    name=str(item["name"]),
                    kind=FeatureKind(item["kind"]),
                    categories=tuple(str(c) for c in item.get("categories", ())),
                )
                for item in data["features"]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"Malformed schema document: {e}") from e
        return cls(features, data.get("label_column"), data.get("circle_column"))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False, sort_keys=True)
        logger.info(f"Schema written to: {path}")

    @classmethod
    def load(cls, path: str) -> "TabularSchema":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Error decoding schema file {path}: {e}") from e
        return cls.from_dict(data)


@dataclass(frozen=True)
class NumericStats:
    mean: float
    std: float


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """One domain's rows: raw values, encoded matrix and circle ids.

    Labels are private: training code reads them through `training_labels()`
    (source role only), evaluation through `evaluation_labels()`.
    """

    schema: TabularSchema
    raw: pd.DataFrame
    circle_ids: np.ndarray
    role: DomainRole = DomainRole.SOURCE
    encoded: Optional[np.ndarray] = None
    stats: Mapping[str, NumericStats] = field(default_factory=dict)
    _labels: Optional[np.ndarray] = field(default=None, repr=False)
    label_missing: bool = False

    def __post_init__(self):
        n = len(self.raw)
        if len(self.circle_ids) != n:
            raise SchemaError(f"circle_ids has {len(self.circle_ids)} entries for {n} rows")
        if self._labels is not None:
            labels = np.asarray(self._labels)
            if len(labels) != n:
                raise SchemaError(f"labels has {len(labels)} entries for {n} rows")
            if not np.isin(labels, (0, 1)).all():
                raise SchemaError("labels must be 0 or 1")
            object.__setattr__(self, "_labels", labels.astype(np.int64))
        if self.encoded is not None and self.encoded.shape != (n, self.schema.encoded_width):
            raise SchemaError(f"encoded matrix shape {self.encoded.shape} does not match "
                              f"({n}, {self.schema.encoded_width})")

    @property
    def n_rows(self) -> int:
        return len(self.raw)

    def __len__(self) -> int:
        return self.n_rows

    @property
    def has_labels(self) -> bool:
        return self._labels is not None

    def training_labels(self) -> np.ndarray:
        if self.role is not DomainRole.SOURCE:
            raise LabelAccessError(f"Labels of a {self.role.value} dataset are never used for training")
        if self._labels is None:
            raise UnlabeledDatasetError("Source dataset carries no labels")
        return self._labels

    def evaluation_labels(self) -> np.ndarray:
        if self.role is DomainRole.SYNTHETIC:
            raise LabelAccessError("Synthetic datasets carry no labels")
        if self._labels is None:
            raise UnlabeledDatasetError("Dataset carries no labels")
        return self._labels

    def require_encoded(self) -> np.ndarray:
        if self.encoded is None:
            raise SchemaError("Dataset has not been encoded")
        return self.encoded

    def circles(self) -> List[str]:
        return sorted(set(self.circle_ids.tolist()))

    def subset(self, indices: Sequence[int]) -> "DomainDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            raw=self.raw.iloc[indices].reset_index(drop=True),
            circle_ids=self.circle_ids[indices],
            encoded=None if self.encoded is None else self.encoded[indices],
            _labels=None if self._labels is None else self._labels[indices],
        )

    def subset_circles(self, circle_ids: Sequence[str]) -> "DomainDataset":
        mask = np.isin(self.circle_ids, list(circle_ids))
        return self.subset(np.flatnonzero(mask))

    def with_role(self, role: DomainRole) -> "DomainDataset":
        labels = None if role is DomainRole.SYNTHETIC else self._labels
        return replace(self, role=role, _labels=labels)


def default_schema(categories_per_feature: int = 4) -> TabularSchema:
    """Demo schema with the 21 credit features (16 categorical, 5 numeric)."""
    cats = tuple(f"c{i}" for i in range(categories_per_feature))
    return TabularSchema(tuple(
        FeatureSpec(name, FeatureKind(kind), cats if kind == "categorical" else ())
        for name, kind in DEMO_FEATURES
    ))


def load_dataset(csv_path: str, schema: TabularSchema,
                 role: DomainRole = DomainRole.SOURCE) -> DomainDataset:
    """Read a CSV file and validate every cell against the schema."""
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [name for name in schema.feature_names if name not in frame.columns]
    if missing:
        raise MissingColumnError(f"{csv_path}: missing columns {missing}")

    raw = pd.DataFrame(index=frame.index)
    for spec in schema.features:
        column = frame[spec.name]
        if spec.is_categorical:
            bad = ~column.isin(spec.categories)
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise UnknownCategoryError(row + 1, spec.name, column.iloc[row])
            raw[spec.name] = column.astype(str)
        else:
            parsed = pd.to_numeric(column.str.strip(), errors="coerce")
            bad = parsed.isna() | ~np.isfinite(parsed.to_numpy(dtype=np.float64, na_value=np.nan))
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise NumericParseError(row + 1, spec.name, column.iloc[row])
            raw[spec.name] = parsed.astype(np.float64)

    labels, label_missing = None, False
    if schema.label_column:
        if schema.label_column in frame.columns:
            values = frame[schema.label_column].str.strip()
            bad = ~values.isin(("0", "1"))
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise SchemaError(f"Label value {values.iloc[row]!r} at row {row + 1} is not 0/1")
            labels = values.astype(np.int64).to_numpy()
        else:
            label_missing = True
            logger.warning(f"{csv_path}: label column {schema.label_column!r} absent, loading unlabeled")

    if schema.circle_column and schema.circle_column in frame.columns:
        circle_ids = frame[schema.circle_column].astype(str).to_numpy(dtype=object)
    else:
        if schema.circle_column:
            logger.warning(f"{csv_path}: circle column {schema.circle_column!r} absent")
        circle_ids = np.full(len(frame), "", dtype=object)

    if role is DomainRole.SYNTHETIC:
        labels = None
    dataset = DomainDataset(schema, raw, circle_ids, role, _labels=labels, label_missing=label_missing)
    logger.info(f"Loaded {dataset.n_rows} {role.value} rows from: {csv_path}")
    return dataset


def write_dataset(dataset: DomainDataset, csv_path: str, include_labels: bool = True):
    """Write raw rows in the input CSV format (circle, features, label)."""
    schema = dataset.schema
    frame = pd.DataFrame()
    if schema.circle_column:
        frame[schema.circle_column] = dataset.circle_ids
    for name in schema.feature_names:
        frame[name] = dataset.raw[name].to_numpy()
    if include_labels and schema.label_column and dataset.has_labels and dataset.role is not DomainRole.SYNTHETIC:
        frame[schema.label_column] = dataset.evaluation_labels()
    parent = os.path.dirname(csv_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame.to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to: {csv_path}")


def dataset_digest(dataset: DomainDataset) -> str:
    """SHA-256 of the raw feature rows in canonical CSV form."""
    text = dataset.raw[dataset.schema.feature_names].to_csv(index=False, lineterminator="\n")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def compute_stats(dataset: DomainDataset) -> Dict[str, NumericStats]:
    """Population mean/std per numeric feature (stored stats win)."""
    if dataset.stats:
        return dict(dataset.stats)
    stats = {}
    for spec in dataset.schema.numeric_features:
        values = dataset.raw[spec.name].to_numpy(dtype=np.float64)
        stats[spec.name] = NumericStats(float(values.mean()) if len(values) else 0.0,
                                        float(values.std()) if len(values) else 0.0)
    return stats


def encode_frame(raw: pd.DataFrame, schema: TabularSchema,
                 stats: Mapping[str, NumericStats]) -> np.ndarray:
    """One-hot categoricals and standardised numerics, in schema order."""
    encoded = np.zeros((len(raw), schema.encoded_width), dtype=np.float64)
    for piece in schema.layout():
        spec = piece.spec
        if spec.is_categorical:
            codes = pd.Categorical(raw[spec.name], categories=spec.categories).codes
            if (codes < 0).any():
                row = int(np.flatnonzero(codes < 0)[0])
                raise UnknownCategoryError(row + 1, spec.name, str(raw[spec.name].iloc[row]))
            encoded[np.arange(len(raw)), piece.start + codes] = 1.0
        else:
            values = raw[spec.name].to_numpy(dtype=np.float64)
            s = stats[spec.name]
            encoded[:, piece.start] = (values - s.mean) / s.std if s.std > 0 else 0.0
    return encoded


def decode_frame(encoded: np.ndarray, schema: TabularSchema,
                 stats: Mapping[str, NumericStats]) -> pd.DataFrame:
    """Inverse of `encode_frame` (a constant numeric column decodes to its mean)."""
    raw = pd.DataFrame(index=np.arange(len(encoded)))
    for piece in schema.layout():
        spec = piece.spec
        block = encoded[:, piece.start:piece.stop]
        if spec.is_categorical:
            raw[spec.name] = np.asarray(spec.categories, dtype=object)[np.argmax(block, axis=1)]
        else:
            s = stats[spec.name]
            raw[spec.name] = block[:, 0] * s.std + s.mean
    return raw


def encode(dataset: DomainDataset, stats_source: Optional[DomainDataset] = None) -> DomainDataset:
    """Return the dataset with its encoded matrix filled in.

    Numerics are standardised with `stats_source`'s statistics when given,
    so the target stream shares the source's input space.
    """
    stats = compute_stats(stats_source if stats_source is not None else dataset)
    encoded = encode_frame(dataset.raw, dataset.schema, stats)
    return replace(dataset, encoded=encoded, stats=stats)


def split_source(dataset: DomainDataset, train_fraction: float,
                 seed: int) -> Tuple[DomainDataset, DomainDataset]:
    """Stratified train/validation split that keeps the minority rate in both parts."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = dataset.training_labels()
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        k = int(np.floor(len(members) * train_fraction + 0.5))
        train_idx.append(members[:k])
        val_idx.append(members[k:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    n_train_pos = int(labels[train_idx].sum())
    n_val_pos = int(labels[val_idx].sum())
    if n_train_pos == 0 or n_val_pos == 0:
        raise TooFewMinorityError(f"Split leaves {n_train_pos} minority rows in training and "
                                  f"{n_val_pos} in validation")
    logger.info(f"Source split: {len(train_idx)} training rows ({n_train_pos} minority), "
                f"{len(val_idx)} validation rows ({n_val_pos} minority)")
    return dataset.subset(train_idx), dataset.subset(val_idx)


def _smoothed(counts: np.ndarray, smoothing: float) -> np.ndarray:
    return counts.astype(np.float64) + smoothing


def kl_divergence(source: DomainDataset, target_subset: DomainDataset,
                  bins: int = 16, smoothing: float = 1.0) -> float:
    """Sum over features of KL(target || source) on smoothed marginals."""
    if source.schema != target_subset.schema:
        raise SchemaError("kl_divergence needs datasets sharing one schema")
    if target_subset.n_rows == 0 or source.n_rows == 0:
        raise EmptySubsetError("kl_divergence needs non-empty datasets")
    total = 0.0
    for spec in source.schema.features:
        s_col, t_col = source.raw[spec.name], target_subset.raw[spec.name]
        if spec.is_categorical:
            s_counts = s_col.value_counts().reindex(spec.categories, fill_value=0).to_numpy()
            t_counts = t_col.value_counts().reindex(spec.categories, fill_value=0).to_numpy()
        else:
            s_values = s_col.to_numpy(dtype=np.float64)
            t_values = t_col.to_numpy(dtype=np.float64)
            pooled = np.concatenate([s_values, t_values])
            edges = np.histogram_bin_edges(pooled, bins=bins, range=(pooled.min(), pooled.max()))
            s_counts, _ = np.histogram(s_values, bins=edges)
            t_counts, _ = np.histogram(t_values, bins=edges)
        total += float(entropy(_smoothed(t_counts, smoothing), _smoothed(s_counts, smoothing)))
    return max(total, 0.0)


@dataclass(frozen=True)
class CircleShift:
    circle_id: str
    kl: float


@dataclass(frozen=True)
class ShiftGroup:
    size: int
    circle_ids: Tuple[str, ...]
    mean_kl: float


@dataclass(frozen=True)
class ShiftGroups:
    """Target circles ordered by KL (largest first) and the nested groups."""

    circles: Tuple[CircleShift, ...]
    groups: Tuple[ShiftGroup, ...]

    def to_dict(self) -> Dict:
        return {
            "circles": [{"id": c.circle_id, "kl": c.kl} for c in self.circles],
            "groups": [{"size": g.size, "circle_ids": list(g.circle_ids), "mean_kl": g.mean_kl}
                       for g in self.groups],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ShiftGroups":
        return cls(
            tuple(CircleShift(str(c["id"]), float(c["kl"])) for c in data["circles"]),
            tuple(ShiftGroup(int(g["size"]), tuple(str(i) for i in g["circle_ids"]), float(g["mean_kl"]))
                  for g in data["groups"]),
        )

    @classmethod
    def load(cls, path: str) -> "ShiftGroups":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def build_shift_groups(source: DomainDataset, target: DomainDataset,
                       group_sizes: Sequence[int] = DEFAULT_GROUP_SIZES,
                       bins: int = 16, smoothing: float = 1.0,
                       max_workers: Optional[int] = None) -> ShiftGroups:
    """Rank target circles by KL against the whole source and nest the top-k groups."""
    circle_ids = target.circles()
    if not group_sizes:
        raise GroupSizeError("At least one group size is required")
    if max(group_sizes) > len(circle_ids) or min(group_sizes) < 1:
        raise GroupSizeError(f"Group sizes {list(group_sizes)} do not fit {len(circle_ids)} target circles")

    def circle_kl(circle_id: str) -> CircleShift:
        kl = kl_divergence(source, target.subset_circles([circle_id]), bins=bins, smoothing=smoothing)
        return CircleShift(circle_id, kl)

    workers = max_workers or default_worker_count()
    if workers > 1 and len(circle_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(circle_kl, circle_ids))
    else:
        scored = [circle_kl(c) for c in circle_ids]
    # ties broken by circle id so the ordering is reproducible
    scored.sort(key=lambda c: (-c.kl, c.circle_id))

    groups = []
    for size in sorted(group_sizes, reverse=True):
        members = scored[:size]
        groups.append(ShiftGroup(size, tuple(c.circle_id for c in members),
                                 float(np.mean([c.kl for c in members]))))
    logger.info("Shift groups: " + ", ".join(f"{g.size}→{g.mean_kl:.4f}" for g in groups))
    return ShiftGroups(tuple(scored), tuple(groups))


@dataclass
class BenchmarkConfig:
    """Synthetic two-domain credit benchmark parameters."""

    n_categorical: int = 16
    n_numeric: int = 5
    categories_per_feature: int = 4
    source_circles: int = 40
    target_circles: int = 80
    source_samples_per_circle: int = 100
    target_samples_per_circle: int = 10
    source_minority_rate: float = 0.13
    target_minority_rate: float = 0.11
    shift_intensity: float = 1.0
    latent_dim: int = 4
    circle_spread: float = 0.5
    label_noise: float = 0.5
    label_coefficients: Optional[List[float]] = None
    interaction_features: Optional[Tuple[int, int]] = None
    interaction_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("source_minority_rate", "target_minority_rate"):
            rate = getattr(self, name)
            if not 0.0 < rate < 1.0:
                raise InfeasibleMinorityRateError(f"{name} must lie in (0, 1), got {rate}")
        if self.shift_intensity < 0:
            raise ConfigError(f"shift_intensity must be >= 0, got {self.shift_intensity}")
        if self.n_categorical + self.n_numeric < 2:
            raise ConfigError("Benchmark needs at least 2 features")
        if self.categories_per_feature < 1 or self.latent_dim < 1:
            raise ConfigError("categories_per_feature and latent_dim must be >= 1")
        if self.label_coefficients is not None and len(self.label_coefficients) != self.latent_dim:
            raise ConfigError(f"label_coefficients needs {self.latent_dim} entries")
        if self.interaction_features is not None:
            i, j = self.interaction_features
            if not (0 <= i < self.n_numeric and 0 <= j < self.n_numeric):
                raise ConfigError(f"interaction_features {self.interaction_features} must index numeric features")
            self.interaction_features = (int(i), int(j))

    def schema(self) -> TabularSchema:
        if self.n_categorical == 16 and self.n_numeric == 5:
            return default_schema(self.categories_per_feature)
        cats = tuple(f"c{i}" for i in range(self.categories_per_feature))
        features = [FeatureSpec(f"cat_{i:02d}", FeatureKind.CATEGORICAL, cats) for i in range(self.n_categorical)]
        features += [FeatureSpec(f"num_{i:02d}", FeatureKind.NUMERIC) for i in range(self.n_numeric)]
        return TabularSchema(tuple(features))


def _threshold_labels(scores: np.ndarray, rate: float) -> np.ndarray:
    n = len(scores)
    k = int(np.floor(rate * n + 0.5))
    if k < 1 or k >= n:
        raise InfeasibleMinorityRateError(f"Minority rate {rate} gives {k} positives out of {n} rows")
    labels = np.zeros(n, dtype=np.int64)
    labels[np.argsort(-scores, kind="stable")[:k]] = 1
    return labels


def gen_benchmark(cfg: BenchmarkConfig) -> Tuple[DomainDataset, DomainDataset]:
    """Generate (source, target) domains with per-circle latent factors and graded shift."""
    rng = np.random.default_rng(cfg.seed)
    schema = cfg.schema()
    L = cfg.latent_dim
    k = cfg.categories_per_feature

    numeric_loadings = rng.normal(0.0, 1.0, size=(cfg.n_numeric, L))
    numeric_scale = rng.uniform(1.0, 10.0, size=cfg.n_numeric)
    numeric_offset = rng.uniform(0.0, 50.0, size=cfg.n_numeric)
    category_loadings = rng.normal(0.0, 1.5, size=(cfg.n_categorical, k, L))
    category_bias = rng.normal(0.0, 0.5, size=(cfg.n_categorical, k))
    beta = (np.asarray(cfg.label_coefficients, dtype=np.float64)
            if cfg.label_coefficients is not None else rng.normal(0.0, 1.0, size=L))

    def sample_domain(n_circles: int, per_circle: int, shift: float, prefix: str):
        latents, circles = [], []
        for c in range(n_circles):
            centre = rng.normal(0.0, cfg.circle_spread, size=L)
            mixing = np.eye(L)
            if shift > 0:
                # per-circle severity spreads the KL values across circles
                severity = shift * rng.uniform(0.0, 1.0)
                centre = centre + severity * rng.normal(0.0, 1.0, size=L)
                mixing = mixing + 0.5 * severity * rng.normal(0.0, 1.0 / np.sqrt(L), size=(L, L))
            noise = rng.normal(0.0, 1.0, size=(per_circle, L))
            latents.append(centre + noise @ mixing.T)
            circles.extend([f"{prefix}{c:03d}"] * per_circle)
        z = np.vstack(latents)
        n = len(z)

        numeric = z @ numeric_loadings.T + rng.normal(0.0, 0.5, size=(n, cfg.n_numeric))
        numeric = numeric_offset + numeric_scale * numeric
        raw = {}
        cat_specs, num_specs = schema.categorical_features, schema.numeric_features
        for f, spec in enumerate(cat_specs):
            logits = z @ category_loadings[f].T + category_bias[f]
            codes = np.argmax(logits + rng.gumbel(size=logits.shape), axis=1)
            raw[spec.name] = np.asarray(spec.categories, dtype=object)[codes]
        for f, spec in enumerate(num_specs):
            raw[spec.name] = numeric[:, f]

        scores = z @ beta + rng.normal(0.0, cfg.label_noise, size=n)
        if cfg.interaction_features is not None and cfg.interaction_strength != 0:
            i, j = cfg.interaction_features
            zi = (numeric[:, i] - numeric[:, i].mean()) / (numeric[:, i].std() or 1.0)
            zj = (numeric[:, j] - numeric[:, j].mean()) / (numeric[:, j].std() or 1.0)
            scores = scores + cfg.interaction_strength * zi * zj
        frame = pd.DataFrame({name: raw[name] for name in schema.feature_names})
        return frame, np.asarray(circles, dtype=object), scores

    s_frame, s_circles, s_scores = sample_domain(cfg.source_circles, cfg.source_samples_per_circle, 0.0, "S")
    t_frame, t_circles, t_scores = sample_domain(cfg.target_circles, cfg.target_samples_per_circle,
                                                 cfg.shift_intensity, "T")
    source = DomainDataset(schema, s_frame, s_circles, DomainRole.SOURCE,
                           _labels=_threshold_labels(s_scores, cfg.source_minority_rate))
    target = DomainDataset(schema, t_frame, t_circles, DomainRole.TARGET,
                           _labels=_threshold_labels(t_scores, cfg.target_minority_rate))
    logger.info(f"Benchmark generated: {source.n_rows} source rows, {target.n_rows} target rows, "
                f"shift intensity {cfg.shift_intensity}")
    return source, target
