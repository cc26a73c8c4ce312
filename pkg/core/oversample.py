#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Synthetic Target Oversampling
توليد بيانات هدف اصطناعية

Enlarges the small target domain to the size of the source training set.
Continuous columns use mode-specific normalization (a Gaussian mixture per
column), discrete columns drive conditional sampling. Generation strategies
are pluggable; labels are never produced.
"""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Type, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import norm
from sklearn.mixture import GaussianMixture

from .data import DomainDataset, DomainRole, TabularSchema, dataset_digest
from .errors import (
    ConfigError,
    EmptyColumnError,
    EmptyTargetError,
    LabelAccessError,
    NoCategoricalColumnsError,
)

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6
ALPHA_STD = 0.25

SeedLike = Union[int, np.random.Generator]


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True)
class GaussianMode:
    weight: float
    mean: float
    std: float


@dataclass(frozen=True)
class ModeNormalizer:
    """Per-column Gaussian modes; a value encodes as (mode one-hot, α)."""

    modes: Tuple[GaussianMode, ...]

    @property
    def k(self) -> int:
        return len(self.modes)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.modes])

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean for m in self.modes])

    @property
    def stds(self) -> np.ndarray:
        return np.array([m.std for m in self.modes])

    def responsibilities(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        log_p = np.log(self.weights) + norm.logpdf(values, loc=self.means, scale=self.stds)
        return np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))

    def encode(self, values) -> Tuple[np.ndarray, np.ndarray]:
        """Return (mode one-hot n×k, clipped α) for each value."""
        values = np.asarray(values, dtype=np.float64).ravel()
        mode = np.argmax(self.responsibilities(values), axis=1)
        one_hot = np.eye(self.k)[mode]
        alpha = (values - self.means[mode]) / (4.0 * self.stds[mode])
        return one_hot, np.clip(alpha, -1.0, 1.0)

    def decode(self, one_hot, alpha) -> np.ndarray:
        mode = np.argmax(np.atleast_2d(one_hot), axis=1)
        return np.asarray(alpha, dtype=np.float64) * 4.0 * self.stds[mode] + self.means[mode]

    def to_dict(self) -> Dict:
        return {"modes": [{"weight": m.weight, "mean": m.mean, "std": m.std} for m in self.modes]}


def fit_mode_normalizer(values, k: int = 5, seed: int = 0) -> ModeNormalizer:
    """Fit a k-mode univariate Gaussian mixture by EM."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyColumnError("Cannot fit a mode normalizer on an empty column")
    if k < 1:
        raise ConfigError(f"mode count must be >= 1, got {k}")
    distinct = np.unique(values).size
    if distinct == 1:
        return ModeNormalizer((GaussianMode(1.0, float(values[0]), STD_FLOOR),))
    if distinct < k:
        logger.warning(f"Mode count reduced from {k} to {distinct} distinct values")
        k = distinct

    mixture = GaussianMixture(n_components=k, max_iter=100, tol=1e-6, random_state=seed)
    mixture.fit(values.reshape(-1, 1))
    if not mixture.converged_:
        logger.warning(f"EM did not converge within 100 iterations ({k} modes)")
    means = mixture.means_.ravel()
    stds = np.maximum(np.sqrt(mixture.covariances_.ravel()), STD_FLOOR)
    weights = mixture.weights_ / mixture.weights_.sum()
    order = np.argsort(means, kind="stable")
    return ModeNormalizer(tuple(GaussianMode(float(weights[i]), float(means[i]), float(stds[i])) for i in order))


@dataclass(frozen=True)
class ConditionalVector:
    """One-hot over the concatenated categories of every discrete column."""

    column: str
    category: str
    vector: np.ndarray

    @property
    def position(self) -> int:
        return int(np.flatnonzero(self.vector)[0])


class ConditionalSampler:
    """Draws (column, category) conditions from a fitted target dataset.

    Columns are picked uniformly. Within a column the category weight is
    log(1 + frequency) under the "log" rule or the raw frequency under
    "original".
    """

    RULES = ("log", "original")

    def __init__(self, schema: TabularSchema, target: DomainDataset, rule: str = "log"):
        if rule not in self.RULES:
            raise ConfigError(f"Unknown condition sampling rule {rule!r}")
        self.schema = schema
        self.rule = rule
        self.columns = schema.categorical_features
        if not self.columns:
            raise NoCategoricalColumnsError("Conditional sampling needs at least one categorical column")
        self.offsets = np.cumsum([0] + [c.width for c in self.columns])
        self.counts = [
            target.raw[spec.name].value_counts().reindex(spec.categories, fill_value=0).to_numpy(dtype=np.float64)
            for spec in self.columns
        ]
        self.probabilities = []
        for counts in self.counts:
            weights = np.log1p(counts) if rule == "log" else counts
            self.probabilities.append(weights / weights.sum())

    @property
    def width(self) -> int:
        return int(self.offsets[-1])

    def draw(self, rng: np.random.Generator) -> Tuple[int, int]:
        """Return (column index, category index)."""
        column = int(rng.integers(len(self.columns)))
        category = int(rng.choice(len(self.probabilities[column]), p=self.probabilities[column]))
        return column, category

    def sample(self, rng: np.random.Generator) -> ConditionalVector:
        column, category = self.draw(rng)
        vector = np.zeros(self.width)
        vector[self.offsets[column] + category] = 1.0
        spec = self.columns[column]
        return ConditionalVector(spec.name, spec.categories[category], vector)


def sample_conditional_vector(schema: TabularSchema, target: DomainDataset,
                              seed: SeedLike, rule: str = "log") -> ConditionalVector:
    return ConditionalSampler(schema, target, rule).sample(_rng(seed))


@dataclass(frozen=True)
class SyntheticProvenance:
    strategy: str
    seed: int
    count: int
    source_digest: str

    def to_dict(self) -> Dict:
        return {"strategy": self.strategy, "seed": self.seed, "count": self.count,
                "source_digest": self.source_digest}


@dataclass(frozen=True, eq=False)
class SyntheticBatch:
    """Generated rows in raw form. There is no label column."""

    schema: TabularSchema
    raw: pd.DataFrame
    circle_ids: np.ndarray
    provenance: SyntheticProvenance

    def __len__(self) -> int:
        return len(self.raw)

    @property
    def labels(self):
        raise LabelAccessError("Synthetic batches never carry labels")

    def to_dataset(self) -> DomainDataset:
        return DomainDataset(self.schema, self.raw, self.circle_ids, DomainRole.SYNTHETIC)


class SyntheticStrategy(ABC):
    """Base class for target-domain generators."""

    name = ""

    def __init__(self, mode_count: int = 5, condition_sampling: str = "original",
                 max_workers: Optional[int] = None):
        self.mode_count = mode_count
        self.condition_sampling = condition_sampling
        self.max_workers = max_workers

    @abstractmethod
    def fit(self, target: DomainDataset, seed: int):
        ...

    @abstractmethod
    def sample(self, count: int, rng: np.random.Generator) -> Tuple[pd.DataFrame, np.ndarray]:
        """Return (raw rows, circle ids)."""


STRATEGIES: Dict[str, Type[SyntheticStrategy]] = {}


def register_strategy(strategy_cls: Type[SyntheticStrategy]) -> Type[SyntheticStrategy]:
    """Class decorator making a generator selectable by name."""
    if not strategy_cls.name:
        raise ConfigError(f"{strategy_cls.__name__} has no strategy name")
    STRATEGIES[strategy_cls.name] = strategy_cls
    return strategy_cls


@register_strategy
class PassthroughBootstrapStrategy(SyntheticStrategy):
    """Resample target rows verbatim, with replacement."""

    name = "passthrough_bootstrap"

    def fit(self, target: DomainDataset, seed: int):
        self.target = target

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[pd.DataFrame, np.ndarray]:
        rows = rng.integers(0, self.target.n_rows, size=count)
        return self.target.raw.iloc[rows].reset_index(drop=True), self.target.circle_ids[rows]


@register_strategy
class ConditionalMixtureStrategy(SyntheticStrategy):
    """Conditional resampling over the mode-specific representation."""

    name = "conditional_mixture"

    def fit(self, target: DomainDataset, seed: int):
        schema = target.schema
        self.target = target
        self.sampler = ConditionalSampler(schema, target, self.condition_sampling)
        self.numeric = schema.numeric_features
        self.codes = np.column_stack([
            pd.Categorical(target.raw[spec.name], categories=spec.categories).codes
            for spec in self.sampler.columns
        ])

        def fit_column(spec):
            return fit_mode_normalizer(target.raw[spec.name].to_numpy(dtype=np.float64), self.mode_count, seed)

        workers = self.max_workers or 1
        if workers > 1 and len(self.numeric) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                self.normalizers: List[ModeNormalizer] = list(pool.map(fit_column, self.numeric))
        else:
            self.normalizers = [fit_column(spec) for spec in self.numeric]
        responsibilities = [
            norm_.responsibilities(target.raw[spec.name].to_numpy(dtype=np.float64))
            for spec, norm_ in zip(self.numeric, self.normalizers)
        ]

        # restricted rows and their mean mode responsibilities per condition
        self.restricted: Dict[Tuple[int, int], np.ndarray] = {}
        self.mode_probs: Dict[Tuple[int, int], List[np.ndarray]] = {}
        all_rows = np.arange(target.n_rows)
        for j, spec in enumerate(self.sampler.columns):
            for c in range(spec.width):
                rows = np.flatnonzero(self.codes[:, j] == c)
                if rows.size == 0:
                    logger.warning(f"No target rows with {spec.name}={spec.categories[c]!r}, "
                                   f"falling back to the full target")
                    rows = all_rows
                self.restricted[(j, c)] = rows
                self.mode_probs[(j, c)] = [r[rows].mean(axis=0) for r in responsibilities]

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[pd.DataFrame, np.ndarray]:
        picked = np.empty(count, dtype=np.int64)
        numeric = np.empty((count, len(self.numeric)))
        for i in range(count):
            condition = self.sampler.draw(rng)
            rows = self.restricted[condition]
            picked[i] = rows[rng.integers(rows.size)]
            for f, normalizer in enumerate(self.normalizers):
                probs = self.mode_probs[condition][f]
                mode = int(rng.choice(normalizer.k, p=probs / probs.sum()))
                alpha = float(np.clip(rng.normal(0.0, ALPHA_STD), -1.0, 1.0))
                numeric[i, f] = alpha * 4.0 * normalizer.modes[mode].std + normalizer.modes[mode].mean

        raw = pd.DataFrame(index=np.arange(count))
        for spec in self.target.schema.features:
            if spec.is_categorical:
                raw[spec.name] = self.target.raw[spec.name].to_numpy()[picked]
            else:
                raw[spec.name] = numeric[:, [s.name for s in self.numeric].index(spec.name)]
        return raw, self.target.circle_ids[picked]


def generate_synthetic(target: DomainDataset, count: int,
                       strategy: str = ConditionalMixtureStrategy.name, seed: int = 0,
                       mode_count: int = 5, condition_sampling: str = "original",
                       max_workers: Optional[int] = None) -> SyntheticBatch:
    """Generate `count` unlabeled target-like rows."""
    if target.n_rows == 0:
        raise EmptyTargetError("Cannot generate synthetic rows from an empty target dataset")
    if count < 1:
        raise ConfigError(f"Synthetic row count must be >= 1, got {count}")
    if strategy not in STRATEGIES:
        raise ConfigError(f"Unknown oversampling strategy {strategy!r}; choose from {sorted(STRATEGIES)}")

    generator = STRATEGIES[strategy](mode_count=mode_count, condition_sampling=condition_sampling,
                                     max_workers=max_workers)
    generator.fit(target, seed)
    raw, circle_ids = generator.sample(count, np.random.default_rng(seed))
    provenance = SyntheticProvenance(strategy, seed, count, dataset_digest(target))
    logger.info(f"Generated {count} synthetic rows with strategy '{strategy}'")
    return SyntheticBatch(target.schema, raw, np.asarray(circle_ids, dtype=object), provenance)
