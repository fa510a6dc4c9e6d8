#!/usr/bin/env python3
"""Errors raised by the incident-duration toolkit."""
# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

from typing import Optional


class IncidentToolkitError(Exception):
    """Common parent for toolkit errors, allowing to catch them all at once."""


# BEGIN: data errors
class DataError(IncidentToolkitError):
    """Common parent for input-data errors."""


class MissingColumn(DataError):
    """Raised when a required column is absent from an input header."""

    def __init__(self, name: str):
        super().__init__(f"missing column: {name}")
        self.name = name


class BadValue(DataError):
    """Raised when a mandatory cell cannot be parsed."""

    def __init__(self, row: int, column: str, value: object = None):
        super().__init__(f"bad value {value!r} in row {row}, column {column}")
        self.row = row
        self.column = column
        self.value = value


class EmptyFile(DataError):
    """Raised when an input file has no header."""


class EmptyInput(DataError):
    """Raised when an operation needs at least one record."""


class SchemaMismatch(DataError):
    """Raised when a matrix does not match the schema a model was trained on."""

    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


# END: data errors


# BEGIN: model errors
class ModelError(IncidentToolkitError):
    """Common parent for estimator errors."""


class DimensionMismatch(ModelError):
    """Raised when vectors and matrices disagree on their sizes."""


class NonPositiveTarget(ModelError):
    """Raised when a loss or transform needs strictly positive targets."""


class CorruptModel(ModelError):
    """Raised when a model document cannot be decoded."""


class KTooLarge(ModelError):
    """Raised when k exceeds the number of stored neighbours."""


class SingularSystem(ModelError):
    """Raised when the normal equations have no unique solution."""


class NoConvergence(ModelError):
    """Raised when an iterative solver stops before its tolerance."""


class BadParams(ModelError):
    """Raised when learner parameters fail validation."""


class MissingValues(ModelError):
    """Raised when a learner that cannot route MISSING receives MISSING cells."""


# END: model errors


# BEGIN: evaluation errors
class EvaluationError(IncidentToolkitError):
    """Common parent for metric errors."""


class LengthMismatch(EvaluationError):
    """Raised when truth and prediction vectors differ in length."""


class NonBinary(EvaluationError):
    """Raised when a label vector holds values outside {0, 1}."""


class EmptyEvaluation(EvaluationError):
    """Raised when there is nothing to evaluate."""


class NonPositiveTruth(EvaluationError):
    """Raised when MAPE meets a non-positive true value."""


class ZeroVariance(EvaluationError):
    """Raised when R² is requested on a constant truth vector."""


# END: evaluation errors


# BEGIN: tuning errors
class TuningError(IncidentToolkitError):
    """Common parent for cross-validation and search errors."""


class ClassTooSmall(TuningError):
    """Raised when a class has fewer members than folds."""


class FoldError(TuningError):
    """Raised when a learner fails inside a fold; wraps the original error."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause


# END: tuning errors


class FeatureError(IncidentToolkitError):
    """Common parent for flow-feature errors."""


class NoDetectorSections(FeatureError):
    """Raised when no detector-equipped section is available."""


class ExplainError(IncidentToolkitError):
    """Common parent for attribution errors."""


class TooManyFeatures(ExplainError):
    """Raised when exact enumeration is requested above its feature limit."""


class PipelineError(IncidentToolkitError):
    """Common parent for bi-level framework errors."""


class NoShortIncidents(PipelineError):
    """Raised when no short incident is available to train the regressor."""


class SynthError(IncidentToolkitError):
    """Common parent for generator errors."""


class InfeasibleConfig(SynthError):
    """Raised when a generator configuration cannot be satisfied."""


class IoFailure(SynthError):
    """Raised when a dataset cannot be written."""
