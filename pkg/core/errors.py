#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error Types
أنواع الأخطاء

Every failure raised by the core package derives from TCNetError so the
command line layer can map it to an exit code in one place.
"""


class TCNetError(Exception):
    """Base class for all library errors."""


class ConfigError(TCNetError):
    """Invalid, unknown or missing configuration values (usage error)."""


# numerical kernel

class ShapeError(TCNetError):
    """Operand shapes are incompatible."""


class NonFiniteError(TCNetError):
    """An operation produced NaN or infinite values."""


class GradCheckError(TCNetError):
    """Gradient check could not be run with the given arguments."""


# data

class SchemaError(TCNetError):
    """Schema document or encoded width is inconsistent."""


class MissingColumnError(SchemaError):
    """A required schema column is absent from the input file."""


class UnknownCategoryError(SchemaError):
    """A categorical value is not listed in the schema."""

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"Unknown category {value!r} in column {column!r} at row {row}")
        self.row = row
        self.column = column
        self.value = value


class NumericParseError(SchemaError):
    """A numeric cell could not be parsed as a decimal number."""

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"Cannot parse {value!r} as a number in column {column!r} at row {row}")
        self.row = row
        self.column = column
        self.value = value


class TooFewMinorityError(TCNetError):
    """A split partition would receive no minority samples."""


class EmptySubsetError(TCNetError):
    """A KL divergence was requested against an empty subset."""


class GroupSizeError(TCNetError):
    """A shift group is larger than the number of target circles."""


class InfeasibleMinorityRateError(TCNetError):
    """The requested minority rate cannot be realised."""


class LabelAccessError(TCNetError):
    """Labels were requested on a path that must never see them."""


class UnlabeledDatasetError(TCNetError):
    """An operation needs labels but the dataset carries none."""


# oversampling

class EmptyColumnError(TCNetError):
    """A mode normalizer was fitted on an empty column."""


class NoCategoricalColumnsError(TCNetError):
    """Conditional sampling needs at least one categorical column."""


class EmptyTargetError(TCNetError):
    """Synthetic generation was asked to fit an empty target dataset."""


# model, losses and training

class BatchSizeMismatchError(TCNetError):
    """Source and target batches differ in size during training."""


class EpochRangeError(TCNetError):
    """An epoch index outside [0, total_epochs)."""


class LengthMismatchError(TCNetError):
    """Paired vectors or matrices differ in length."""


class NonFiniteLossError(TCNetError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"Non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class EmptyDatasetError(TCNetError):
    """A dataset passed to training or evaluation has no rows."""


class CheckpointError(TCNetError):
    """A checkpoint file is malformed or does not match the schema."""


# evaluation and explanation

class ZeroTestingMetricError(TCNetError):
    """A decreasing rate is undefined because the testing metric is zero."""


class CircleMismatchError(TCNetError):
    """A shift group names circles that the dataset does not contain."""


class EmptyFilterSelectionError(TCNetError):
    """An attention filter selected no instances."""


class DegeneratePerturbationError(TCNetError):
    """Every perturbed neighbour is identical, so no surrogate can be fitted."""


# artifacts

class OutputLockedError(TCNetError):
    """Another command holds the output directory lock."""
