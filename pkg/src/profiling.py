"""Profiling of the incident table: duration statistics, ECCDF regimes, correlations
and the outlier-removal study."""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from exceptions import EmptyInput
from flow_features import FeatureSetSpec, build_features
from learners import LearnerSpec
from records import FeatureMatrix, IncidentRecord, RoadSection, filter_outliers
from tuning import TuningSettings, evaluate

logger = logging.getLogger(__name__)

LONG_TAIL_MINUTES = 100.0
QUICK_MINUTES = 30.0


def _durations(records: Sequence[IncidentRecord]) -> np.ndarray:
    durations = np.array(
        [r.duration_min for r in records if r.duration_min is not None], dtype=float
    )
    if durations.size == 0:
        raise EmptyInput("no incident durations to profile")
    return durations


def duration_summary(
    records: Sequence[IncidentRecord], threshold: float = Config.Pipeline.THRESHOLD
) -> pd.DataFrame:
    """One-row table of duration statistics."""
    y = _durations(records)
    return pd.DataFrame(
        [
            {
                "count": int(y.size),
                "mean": float(y.mean()),
                "median": float(np.median(y)),
                "max": float(y.max()),
                "share_under_30": float(np.mean(y < QUICK_MINUTES)),
                "share_short": float(np.mean(y <= threshold)),
                "share_long_tail": float(np.mean(y >= LONG_TAIL_MINUTES)),
            }
        ]
    )


def eccdf(durations: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted distinct durations and P(Y > y) at each of them."""
    y = np.sort(np.asarray(durations, dtype=float))
    if y.size == 0:
        raise EmptyInput("no durations")
    values, counts = np.unique(y, return_counts=True)
    return values, 1.0 - np.cumsum(counts) / y.size


@dataclass(frozen=True)
class TwoRegimeFit:
    """Hinge fit of log-ECCDF against log-duration, compared with one straight line.

    lr_statistic is n * ln(sse_one / sse_two), the Gaussian likelihood ratio of
    the two fits.
    """

    breakpoint: float
    slope_low: float
    slope_high: float
    sse_one: float
    sse_two: float
    n_points: int

    @property
    def lr_statistic(self) -> float:
        """Likelihood-ratio statistic; larger favours two regimes."""
        if self.sse_two <= 0:
            return float("inf")
        return float(self.n_points * np.log(self.sse_one / self.sse_two))


def _sse(design: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, float]:
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    residual = z - design @ coef
    return coef, float(residual @ residual)


def two_regime_fit(
    durations: Sequence[float], breakpoints: Optional[Sequence[float]] = None
) -> TwoRegimeFit:
    """Best single-breakpoint fit of the log-log ECCDF over the candidate breakpoints.

    Every candidate needs at least two ECCDF points on each side.
    """
    values, survival = eccdf(durations)
    keep = (survival > 0) & (values > 0)
    x, z = np.log(values[keep]), np.log(survival[keep])
    if x.size < 4:
        raise EmptyInput("at least four distinct positive durations are needed")
    if breakpoints is None:
        breakpoints = np.geomspace(10.0, 200.0, 40)

    ones = np.ones_like(x)
    _, sse_one = _sse(np.column_stack([ones, x]), z)
    best = None
    for candidate in breakpoints:
        pivot = np.log(candidate)
        if np.sum(x < pivot) < 2 or np.sum(x >= pivot) < 2:
            continue
        hinge = np.maximum(0.0, x - pivot)
        coef, sse = _sse(np.column_stack([ones, x, hinge]), z)
        if best is None or sse < best[1]:
            best = (float(candidate), sse, coef)
    if best is None:
        raise EmptyInput("no candidate breakpoint splits the ECCDF")
    candidate, sse_two, coef = best
    logger.debug("two-regime breakpoint %.1f min, SSE %.4g vs %.4g", candidate, sse_two, sse_one)
    return TwoRegimeFit(
        breakpoint=candidate,
        slope_low=float(coef[1]),
        slope_high=float(coef[1] + coef[2]),
        sse_one=sse_one,
        sse_two=sse_two,
        n_points=int(x.size),
    )


def feature_correlation(matrix: FeatureMatrix) -> pd.DataFrame:
    """Pearson correlations between encoded columns over pairwise-complete rows."""
    frame = pd.DataFrame(matrix.values, columns=matrix.names)
    return frame.corr(method="pearson")


def outlier_sweep(
    records: Sequence[IncidentRecord],
    thresholds: Sequence[float],
    learner: LearnerSpec,
    settings: TuningSettings,
    sections: Sequence[RoadSection] = (),
    flows=(),
    features: FeatureSetSpec = FeatureSetSpec(variant=Config.Features.BFS),
) -> pd.DataFrame:
    """Test MAPE and R² after dropping incidents shorter than each threshold.

    Zero-minute incidents have no relative error and are left out at every threshold.
    """
    rows = []
    for threshold in thresholds:
        kept = filter_outliers(records, threshold)
        scored = [r for r in kept if r.duration_min > 0]
        if len(scored) < len(kept):
            logger.warning(
                "min duration %g: %d zero-minute incidents left out of MAPE scoring",
                threshold,
                len(kept) - len(scored),
            )
        kept = scored
        matrix = build_features(kept, sections, flows, features)
        result = evaluate(learner, matrix, None, settings, Config.Tuning.REGRESS_METRICS)
        rows.append(
            {
                "threshold": float(threshold),
                "rows_kept": len(kept),
                "mape_mean": result.mean("mape"),
                "mape_std": result.std("mape"),
                "r2_mean": result.mean("r2"),
                "r2_std": result.std("r2"),
            }
        )
        logger.info(
            "min duration %g: %d rows, MAPE %.2f", threshold, len(kept), rows[-1]["mape_mean"]
        )
    return pd.DataFrame(rows)
