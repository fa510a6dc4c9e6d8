"""Classification and regression scores."""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence

import numpy as np

from exceptions import (
    EmptyEvaluation,
    LengthMismatch,
    NonBinary,
    NonPositiveTruth,
    ZeroVariance,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; the positive class (1) is the short incident."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        """Number of evaluated rows."""
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ClassificationScores:
    """Accuracy, precision, recall and F1; degenerate marks an undefined P or R."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def as_dict(self) -> Dict[str, float]:
        """Metric name to value."""
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class RegressionScores:
    """MAPE in percent points and R² over n rows."""

    mape: float
    r2: float
    n: int


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape[0]} truths vs {y_pred.shape[0]} predictions")
    return y_true, y_pred


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionCounts:
    """Count true/false positives/negatives."""
    y_true, y_pred = _pair(y_true, y_pred)
    for vector in (y_true, y_pred):
        if not np.isin(vector, (0.0, 1.0)).all():
            raise NonBinary("labels must be 0 or 1")
    truth = y_true == 1
    guess = y_pred == 1
    return ConfusionCounts(
        tp=int(np.sum(truth & guess)),
        tn=int(np.sum(~truth & ~guess)),
        fp=int(np.sum(~truth & guess)),
        fn=int(np.sum(truth & ~guess)),
    )


def classification_scores(c: ConfusionCounts) -> ClassificationScores:
    """Accuracy, precision, recall and F1 of a confusion."""
    if c.total == 0:
        raise EmptyEvaluation("no rows to score")
    degenerate = False
    if c.tp + c.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = c.tp / (c.tp + c.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    if degenerate:
        logger.debug("degenerate confusion %s", c)
    return ClassificationScores(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=degenerate,
    )


def mape(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent points."""
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.size == 0:
        raise EmptyEvaluation("no rows to score")
    if (y_true <= 0).any():
        raise NonPositiveTruth("MAPE needs strictly positive truths")
    return float(100.0 * np.mean(np.abs(y_true - y_pred) / y_true))


def r2(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Coefficient of determination; negative when worse than the mean."""
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.size < 2:
        raise EmptyEvaluation("R² needs at least two rows")
    total = np.sum((y_true - y_true.mean()) ** 2)
    if total == 0:
        raise ZeroVariance("R² is undefined on a constant truth vector")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / total)


def mse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Mean squared error."""
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.size == 0:
        raise EmptyEvaluation("no rows to score")
    return float(np.mean((y_true - y_pred) ** 2))


def mae(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """Mean absolute error."""
    y_true, y_pred = _pair(y_true, y_pred)
    if y_true.size == 0:
        raise EmptyEvaluation("no rows to score")
    return float(np.mean(np.abs(y_true - y_pred)))


def regression_scores(y_true: Sequence[float], y_pred: Sequence[float]) -> RegressionScores:
    """MAPE and R² together."""
    return RegressionScores(mape=mape(y_true, y_pred), r2=r2(y_true, y_pred), n=len(y_true))


def _classification_metric(name: str) -> Callable[[Sequence[int], Sequence[int]], float]:
    def score(y_true, y_pred):
        return getattr(classification_scores(confusion(y_true, y_pred)), name)

    return score


SCORERS: Dict[str, Callable[[Sequence[float], Sequence[float]], float]] = {
    "accuracy": _classification_metric("accuracy"),
    "precision": _classification_metric("precision"),
    "recall": _classification_metric("recall"),
    "f1": _classification_metric("f1"),
    "mape": mape,
    "r2": r2,
    "mse": mse,
    "mae": mae,
}
