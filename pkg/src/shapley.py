"""Shapley-value attribution for any trained duration or class-probability predictor.

The value of a coalition S is interventional: features in S come from the
instance, the others from each background row, and the predictions are
averaged over the background.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import Config
from exceptions import EmptyInput, TooManyFeatures
from records import FeatureMatrix
from tuning import derive_seed

logger = logging.getLogger(__name__)

AUTO = "auto"
CHUNK = 1024
# upper bound on the cells of one coalition grid handed to the model
MAX_GRID_CELLS = 1 << 21


def predictor(model) -> Callable[[np.ndarray], np.ndarray]:
    """Scoring callable of an estimator, a tree ensemble or a plain function."""
    if hasattr(model, "predict_score"):
        return model.predict_score
    if callable(model):
        return model
    return model.predict


def _grid(matrix) -> np.ndarray:
    values = matrix.values if isinstance(matrix, FeatureMatrix) else matrix
    return np.atleast_2d(np.asarray(values, dtype=float))


def _names(matrix, n_features: int) -> Tuple[str, ...]:
    if isinstance(matrix, FeatureMatrix):
        return tuple(matrix.names)
    return tuple(f"f{j}" for j in range(n_features))


def default_background(
    matrix, rows: int = Config.Shapley.BACKGROUND_ROWS, seed: int = 0
) -> np.ndarray:
    """Up to `rows` rows of matrix, drawn without replacement with a fixed seed."""
    values = _grid(matrix)
    if values.shape[0] <= rows:
        return values
    picked = np.random.default_rng(seed).choice(values.shape[0], size=rows, replace=False)
    return values[np.sort(picked)]


class ValueFunction:
    """v(S) for one instance against a background sample."""

    def __init__(self, model, background, instance):
        self.predict = predictor(model)
        self.background = _grid(background)
        self.instance = np.asarray(_grid(instance)[0], dtype=float)
        if self.background.shape[0] == 0:
            raise EmptyInput("background holds no rows")
        if self.background.shape[1] != self.instance.shape[0]:
            raise ValueError("background and instance widths differ")

    @property
    def n_features(self) -> int:
        """Number of players."""
        return self.instance.shape[0]

    @property
    def masks_per_call(self) -> int:
        """Coalitions evaluated per model call, keeping each grid within MAX_GRID_CELLS."""
        row_cells = self.background.shape[0] * max(self.n_features, 1)
        return max(1, MAX_GRID_CELLS // row_cells)

    def batch(self, masks: np.ndarray) -> np.ndarray:
        """v of every coalition in a boolean (m, n) mask array."""
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        n_bg = self.background.shape[0]
        step = self.masks_per_call
        out = np.empty(masks.shape[0])
        for start in range(0, masks.shape[0], step):
            chunk = masks[start : start + step]
            grid = np.where(chunk[:, None, :], self.instance[None, None, :], self.background[None])
            scores = np.asarray(self.predict(grid.reshape(-1, self.n_features)), dtype=float)
            out[start : start + chunk.shape[0]] = scores.reshape(chunk.shape[0], n_bg).mean(axis=1)
        return out

    def __call__(self, coalition: Sequence[int]) -> float:
        mask = np.zeros(self.n_features, dtype=bool)
        mask[list(coalition)] = True
        return float(self.batch(mask[None])[0])


@dataclass(frozen=True)
class ShapReport:
    """Attributions of one prediction."""

    phi: np.ndarray
    base_value: float
    prediction: float
    estimator: str
    names: Tuple[str, ...] = ()
    n_samples: int = 0
    stderr: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        """feature, phi and (Monte Carlo only) stderr per feature."""
        names = self.names or tuple(f"f{j}" for j in range(self.phi.shape[0]))
        frame = pd.DataFrame({"feature": list(names), "phi": self.phi})
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame


def _mask_bits(codes: np.ndarray, n: int) -> np.ndarray:
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def exact_shapley(
    vf: ValueFunction,
    exact_limit: int = Config.Shapley.EXACT_LIMIT,
    names: Tuple[str, ...] = (),
    threads: int = 1,
) -> ShapReport:
    """Full-enumeration Shapley values; every coalition value is computed once."""
    n = vf.n_features
    if n > exact_limit:
        raise TooManyFeatures(
            f"{n} features exceed the exact limit of {exact_limit}; use Monte Carlo sampling"
        )
    codes = np.arange(1 << n)
    chunks = [codes[i : i + CHUNK] for i in range(0, codes.size, CHUNK)]
    parts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(vf.batch)(_mask_bits(chunk, n)) for chunk in chunks
    )
    values = np.concatenate(parts)

    sizes = np.array([bin(c).count("1") for c in codes])
    weights = np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)]
    )
    phi = np.zeros(n)
    for i in range(n):
        without = codes[(codes >> i) & 1 == 0]
        phi[i] = np.sum(weights[sizes[without]] * (values[without | (1 << i)] - values[without]))
    logger.debug("exact attribution over %d coalitions", codes.size)
    return ShapReport(
        phi=phi,
        base_value=float(values[0]),
        prediction=float(values[-1]),
        estimator=Config.Shapley.EXACT,
        names=names,
        n_samples=int(codes.size),
    )


def _permutation_contributions(vf: ValueFunction, orders: np.ndarray) -> np.ndarray:
    n = vf.n_features
    out = np.zeros((orders.shape[0], n))
    for p, order in enumerate(orders):
        masks = np.zeros((n + 1, n), dtype=bool)
        for j in range(n):
            masks[j + 1] = masks[j]
            masks[j + 1, order[j]] = True
        values = vf.batch(masks)
        out[p, order] = np.diff(values)
    return out


def mc_shapley(
    vf: ValueFunction,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    permutations: Optional[np.ndarray] = None,
    names: Tuple[str, ...] = (),
    threads: int = 1,
) -> ShapReport:
    """Permutation-sampling Shapley estimate with per-feature standard errors.

    Args:
        vf: value function of the instance.
        n_permutations: number of random orderings to draw.
        seed: seed of the orderings.
        permutations: explicit orderings, replacing the random draw.
        names: feature names carried into the report.
        threads: joblib threads evaluating batches of orderings.
    """
    n = vf.n_features
    if permutations is None:
        if n_permutations < 1:
            raise ValueError("n_permutations must be at least 1")
        rng = np.random.default_rng(seed)
        orders = np.array([rng.permutation(n) for _ in range(n_permutations)], dtype=int)
    else:
        orders = np.atleast_2d(np.asarray(permutations, dtype=int))
    size = max(1, math.ceil(orders.shape[0] / max(threads, 1)))
    batches = [orders[i : i + size] for i in range(0, orders.shape[0], size)]
    parts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_permutation_contributions)(vf, batch) for batch in batches
    )
    contributions = np.concatenate(parts)
    count = contributions.shape[0]
    if count > 1:
        stderr = contributions.std(axis=0, ddof=1) / np.sqrt(count)
    else:
        stderr = np.full(n, np.nan)
    empty, full = vf.batch(np.array([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)]))
    return ShapReport(
        phi=contributions.mean(axis=0),
        base_value=float(empty),
        prediction=float(full),
        estimator=Config.Shapley.MONTE_CARLO,
        names=names,
        n_samples=count,
        stderr=stderr,
    )


def attribute(
    vf: ValueFunction,
    method: str = AUTO,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    names: Tuple[str, ...] = (),
    threads: int = 1,
) -> ShapReport:
    """Exact attribution up to the exact limit, Monte Carlo above it, unless method forces one."""
    if method == AUTO:
        exact = vf.n_features <= Config.Shapley.EXACT_LIMIT
        method = Config.Shapley.EXACT if exact else Config.Shapley.MONTE_CARLO
    if method == Config.Shapley.EXACT:
        return exact_shapley(vf, names=names, threads=threads)
    if method == Config.Shapley.MONTE_CARLO:
        return mc_shapley(vf, n_permutations, seed, names=names, threads=threads)
    raise ValueError(f"unknown attribution method {method}")


def explain_rows(
    model,
    matrix,
    background=None,
    method: str = AUTO,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    threads: int = 1,
) -> List[ShapReport]:
    """One report per row of matrix; row i samples orderings from its own derived seed."""
    values = _grid(matrix)
    if values.shape[0] == 0:
        raise EmptyInput("nothing to explain")
    names = _names(matrix, values.shape[1])
    if background is None:
        background = default_background(matrix, seed=seed)
    reports = []
    for i, row in enumerate(values):
        vf = ValueFunction(model, background, row)
        reports.append(
            attribute(vf, method, n_permutations, derive_seed(seed, i), names, threads)
        )
    logger.info("attributed %d predictions over %d features", len(reports), values.shape[1])
    return reports


def summarize(reports: Sequence[ShapReport]) -> pd.DataFrame:
    """Mean |phi| per feature, largest first; equal scores keep feature order."""
    if not reports:
        raise EmptyInput("no reports to summarize")
    phis = np.array([r.phi for r in reports])
    names = reports[0].names or tuple(f"f{j}" for j in range(phis.shape[1]))
    magnitude = np.abs(phis)
    score = magnitude.mean(axis=0)
    if phis.shape[0] > 1:
        stderr = magnitude.std(axis=0, ddof=1) / np.sqrt(phis.shape[0])
    else:
        stderr = np.full(phis.shape[1], np.nan)
    order = sorted(range(phis.shape[1]), key=lambda j: (-score[j], j))
    return pd.DataFrame(
        {
            "feature": [names[j] for j in order],
            "phi": phis.mean(axis=0)[order],
            "abs_mean_phi": score[order],
            "stderr": stderr[order],
        }
    )


def shap_summary(
    model,
    matrix,
    background=None,
    method: str = AUTO,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """Feature ranking by mean absolute attribution over the rows of matrix."""
    return summarize(
        explain_rows(model, matrix, background, method, n_permutations, seed, threads)
    )


@dataclass(frozen=True)
class Breakdown:
    """One prediction split into duration-increasing and duration-decreasing parts."""

    base_value: float
    prediction: float
    increasing: Tuple[Tuple[str, float], ...]
    decreasing: Tuple[Tuple[str, float], ...]

    @property
    def total(self) -> float:
        """base + sum of attributions."""
        return self.base_value + sum(p for _, p in self.increasing + self.decreasing)

    def to_frame(self) -> pd.DataFrame:
        """Rows base, increasing…, decreasing…, base_plus_sum, prediction."""
        rows = [{"part": "base", "feature": "", "phi": self.base_value}]
        rows += [{"part": "increasing", "feature": f, "phi": p} for f, p in self.increasing]
        rows += [{"part": "decreasing", "feature": f, "phi": p} for f, p in self.decreasing]
        rows.append({"part": "base_plus_sum", "feature": "", "phi": self.total})
        rows.append({"part": "prediction", "feature": "", "phi": self.prediction})
        return pd.DataFrame(rows, columns=["part", "feature", "phi"])


def breakdown(report: ShapReport) -> Breakdown:
    """Partition a report by sign, each side ordered by magnitude; zero attributions drop out."""
    names = report.names or tuple(f"f{j}" for j in range(report.phi.shape[0]))
    pairs = [(names[j], float(p)) for j, p in enumerate(report.phi)]
    return Breakdown(
        base_value=report.base_value,
        prediction=report.prediction,
        increasing=tuple(sorted((x for x in pairs if x[1] > 0), key=lambda x: -x[1])),
        decreasing=tuple(sorted((x for x in pairs if x[1] < 0), key=lambda x: x[1])),
    )


def explain_prediction(
    model,
    instance,
    background,
    method: str = AUTO,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    threads: int = 1,
) -> Breakdown:
    """Attribution breakdown of a single prediction."""
    values = _grid(instance)
    vf = ValueFunction(model, background, values[0])
    names = _names(instance, values.shape[1])
    return breakdown(attribute(vf, method, n_permutations, seed, names, threads))


def _normalized(values: np.ndarray) -> np.ndarray:
    low = np.nanmin(values, axis=0)
    span = np.nanmax(values, axis=0) - low
    span = np.where(span > 0, span, 1.0)
    return (values - low) / span


def values_table(reports: Sequence[ShapReport], matrix) -> pd.DataFrame:
    """Long table of (row_id, feature, phi, feature_value) for reports on the rows of matrix.

    feature_value is the cell scaled to [0, 1] per column, for display only;
    MISSING cells stay empty.
    """
    values = _grid(matrix)
    names = _names(matrix, values.shape[1])
    if isinstance(matrix, FeatureMatrix):
        row_ids = list(matrix.row_ids)
    else:
        row_ids = [str(i) for i in range(values.shape[0])]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        scaled = _normalized(values)
    records: List[Dict] = []
    for i, report in enumerate(reports):
        for j, name in enumerate(names):
            records.append(
                {
                    "row_id": row_ids[i],
                    "feature": name,
                    "phi": float(report.phi[j]),
                    "feature_value": float(scaled[i, j]),
                }
            )
    return pd.DataFrame(records, columns=["row_id", "feature", "phi", "feature_value"])


def shap_values_table(
    model,
    matrix,
    background=None,
    method: str = AUTO,
    n_permutations: int = Config.Shapley.PERMUTATIONS,
    seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """Per-point attributions of every row of matrix, see values_table."""
    reports = explain_rows(model, matrix, background, method, n_permutations, seed, threads)
    return values_table(reports, matrix)
