#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Loss Functions
دوال الخسارة
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from . import numcore as nc
from .errors import ConfigError, EpochRangeError, LengthMismatchError, ShapeError
from .numcore import Tensor, TensorLike

logger = logging.getLogger(__name__)


class LambdaMode(Enum):
    FIXED = "fixed"
    EPOCH_VARYING = "epoch_varying"


@dataclass(frozen=True)
class LossConfig:
    """Minority weight, λ schedule selector and the probability clamp."""

    minority_weight: float = 0.75
    lambda_mode: Union[LambdaMode, str] = LambdaMode.EPOCH_VARYING
    lambda_value: float = 1.0
    clamp_eps: float = 1e-12

    def __post_init__(self):
        try:
            object.__setattr__(self, "lambda_mode", LambdaMode(self.lambda_mode))
        except ValueError:
            raise ConfigError(f"Unknown lambda_mode {self.lambda_mode!r}") from None
        if not 0.0 < self.minority_weight < 1.0:
            raise ConfigError(f"minority_weight must lie in (0, 1), got {self.minority_weight}")
        if self.lambda_mode is LambdaMode.FIXED and not 0.0 <= self.lambda_value <= 1.0:
            raise ConfigError(f"fixed lambda must lie in [0, 1], got {self.lambda_value}")
        if not self.clamp_eps > 0:
            raise ConfigError(f"clamp_eps must be positive, got {self.clamp_eps}")

    @classmethod
    def from_dict(cls, section: Mapping[str, Any]) -> "LossConfig":
        return cls(**{k: v for k, v in section.items() if k != "preset"})

    @classmethod
    def fixed(cls, lam: float, **kwargs) -> "LossConfig":
        return cls(lambda_mode=LambdaMode.FIXED, lambda_value=lam, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "minority_weight": self.minority_weight,
            "lambda_mode": self.lambda_mode.value,
            "lambda_value": self.lambda_value,
            "clamp_eps": self.clamp_eps,
        }


@dataclass
class LossBreakdown:
    weighted: float
    coral: float
    lam: float
    total: float
    total_tensor: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> Dict[str, float]:
        return {"weighted": self.weighted, "coral": self.coral, "lambda": self.lam, "total": self.total}


def weighted_bce(y_hat: TensorLike, y, w: float = 0.75, eps: float = 1e-12) -> Tensor:
    """Batch mean of -w·y·log ŷ - (1-w)(1-y)·log(1-ŷ), ŷ clamped to [eps, 1-eps]."""
    y_hat = nc.as_tensor(y_hat)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y_hat.value.size != y.size:
        raise LengthMismatchError(f"weighted_bce: {y_hat.value.size} predictions for {y.size} labels")
    p = nc.reshape(nc.clip(y_hat, eps, 1.0 - eps), (y.size,))
    positive = (w * y) * nc.log(p)
    negative = ((1.0 - w) * (1.0 - y)) * nc.log(1.0 - p)
    return -nc.mean(positive + negative)


def covariance(features: TensorLike) -> Tensor:
    """Sample covariance (Xᵀ X - (1ᵀX)ᵀ(1ᵀX)/M) / (M - 1) of an M×d matrix."""
    features = nc.as_tensor(features)
    m = features.shape[0]
    totals = nc.matmul(np.ones((1, m)), features)
    gram = nc.matmul(nc.transpose(features), features)
    return (gram - nc.matmul(nc.transpose(totals), totals) * (1.0 / m)) * (1.0 / (m - 1))


def coral_loss(feat_s: TensorLike, feat_t: TensorLike) -> Tensor:
    """Squared Frobenius distance of the two covariances, scaled by 1/(4d²)."""
    feat_s, feat_t = nc.as_tensor(feat_s), nc.as_tensor(feat_t)
    if feat_s.ndim != 2 or feat_t.ndim != 2:
        raise ShapeError(f"coral_loss expects matrices, got {feat_s.shape} and {feat_t.shape}")
    if feat_s.shape[0] != feat_t.shape[0]:
        raise LengthMismatchError(f"coral_loss: {feat_s.shape[0]} source rows vs {feat_t.shape[0]} target rows")
    if feat_s.shape[1] != feat_t.shape[1]:
        raise ShapeError(f"coral_loss: feature widths differ, {feat_s.shape} vs {feat_t.shape}")
    m, d = feat_s.shape
    if m < 2:
        raise ShapeError(f"coral_loss needs at least 2 rows, got {m}")
    diff = covariance(feat_s) - covariance(feat_t)
    return nc.sum(diff * diff) * (1.0 / (4.0 * d * d))


def lambda_schedule(epoch: int, total_epochs: int, cfg: Optional[LossConfig] = None) -> float:
    cfg = cfg or LossConfig()
    if total_epochs < 1 or not 0 <= epoch < total_epochs:
        raise EpochRangeError(f"epoch {epoch} outside [0, {total_epochs})")
    if cfg.lambda_mode is LambdaMode.FIXED:
        return float(cfg.lambda_value)
    return (epoch + 1) / total_epochs


def total_loss(y_hat: TensorLike, y, feat_s: TensorLike, feat_t: TensorLike,
               epoch: int, cfg: LossConfig, total_epochs: int) -> LossBreakdown:
    """Weighted cross-entropy plus λ-weighted CORAL alignment."""
    lam = lambda_schedule(epoch, total_epochs, cfg)
    weighted = weighted_bce(y_hat, y, cfg.minority_weight, cfg.clamp_eps)
    coral = coral_loss(feat_s, feat_t)
    total = weighted + coral * lam
    return LossBreakdown(weighted.item(), coral.item(), lam, total.item(), total)
