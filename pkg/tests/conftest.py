# -*- coding: utf-8 -*-
"""Shared fixtures for the test suite."""

import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.data import (  # noqa: E402
    BenchmarkConfig,
    DomainDataset,
    DomainRole,
    FeatureKind,
    FeatureSpec,
    TabularSchema,
    encode,
    gen_benchmark,
    split_source,
)
from core.model import ModelConfig  # noqa: E402
from core.train import TrainConfig  # noqa: E402
from core.losses import LossConfig  # noqa: E402


@pytest.fixture
def small_schema():
    """Three categorical and two numeric features."""
    return TabularSchema((
        FeatureSpec("region", FeatureKind.CATEGORICAL, ("north", "south")),
        FeatureSpec("sector", FeatureKind.CATEGORICAL, ("retail", "industry", "services")),
        FeatureSpec("rating", FeatureKind.CATEGORICAL, ("a", "b")),
        FeatureSpec("deposit", FeatureKind.NUMERIC),
        FeatureSpec("credit", FeatureKind.NUMERIC),
    ))


@pytest.fixture
def small_dataset(small_schema):
    rng = np.random.default_rng(3)
    n = 40
    raw = pd.DataFrame({
        "region": rng.choice(["north", "south"], size=n),
        "sector": rng.choice(["retail", "industry", "services"], size=n),
        "rating": rng.choice(["a", "b"], size=n),
        "deposit": rng.normal(100.0, 20.0, size=n),
        "credit": rng.normal(50.0, 5.0, size=n),
    })
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.choice(n, size=8, replace=False)] = 1
    circles = np.array([f"C{i % 4}" for i in range(n)], dtype=object)
    return DomainDataset(small_schema, raw, circles, DomainRole.SOURCE, _labels=labels)


@pytest.fixture
def tiny_model_config():
    def make(token_count: int) -> ModelConfig:
        return ModelConfig(token_count=token_count, d_model=4, heads=2, ffn_hidden=6, trunk_widths=(6, 4, 3))
    return make


@pytest.fixture
def small_benchmark_config():
    return BenchmarkConfig(source_circles=4, target_circles=10, source_samples_per_circle=30,
                           target_samples_per_circle=10, seed=11)


@pytest.fixture
def benchmark_domains(small_benchmark_config):
    return gen_benchmark(small_benchmark_config)


@pytest.fixture
def training_streams(benchmark_domains):
    """Encoded (source_train, source_val, synthetic_target) from the small benchmark."""
    source, target = benchmark_domains
    train_rows, val_rows = split_source(source, 0.8, seed=5)
    source_train = encode(train_rows)
    source_val = encode(val_rows, stats_source=source_train)
    synthetic = encode(target.with_role(DomainRole.SYNTHETIC), stats_source=source_train)
    return source_train, source_val, synthetic


@pytest.fixture
def quick_train_config(tiny_model_config):
    return TrainConfig(max_epochs=3, batch_size=32, initial_lr=0.05, early_stop_patience=2, seed=1,
                       loss=LossConfig(), model=tiny_model_config(21))
