"""Comparison learners: k-nearest neighbours, ridge/logistic regression, random forest
and the constant mean predictor.

kNN and the linear models cannot route MISSING: their estimators median-impute with
statistics of the training rows. The forest reuses the booster's tree grower on
bootstrap samples.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from overrides import override
from pydantic import BaseModel, Field

from config import Config
from exceptions import (
    DimensionMismatch,
    KTooLarge,
    MissingValues,
    NoConvergence,
    SingularSystem,
)
from learners.base import Estimator, MedianImputer, Standardizer, register, validated
from learners.booster import (
    HyperParams,
    RegressionTree,
    as_values,
    grow_tree,
    presort,
    sigmoid,
)

logger = logging.getLogger(__name__)

IDENTITY = "identity"
LOGIT = "logit"


def _check_complete(values: np.ndarray) -> None:
    if np.isnan(values).any():
        raise MissingValues("MISSING cells must be imputed first")


# BEGIN: k-nearest neighbours
@dataclass(frozen=True)
class KnnModel:
    """Standardized training rows with their targets."""

    rows: np.ndarray
    targets: np.ndarray
    k: int
    task: str
    standardizer: Standardizer

    @property
    def n_rows(self) -> int:
        """Number of stored neighbours."""
        return self.rows.shape[0]


def knn_fit(matrix, targets: Sequence[float], k: int, task: str) -> KnnModel:
    """Store the standardized training rows."""
    values = as_values(matrix)
    _check_complete(values)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if targets.shape[0] != values.shape[0]:
        raise DimensionMismatch(f"{targets.shape[0]} targets for {values.shape[0]} rows")
    if k < 1 or k > values.shape[0]:
        raise KTooLarge(f"k={k} with {values.shape[0]} training rows")
    standardizer = Standardizer().fit(values)
    return KnnModel(standardizer.transform(values), targets, k, task, standardizer)


def knn_neighbours(model: KnnModel, rows) -> np.ndarray:
    """Indices of the k nearest training rows per query, nearest first.

    Equal distances keep training order.
    """
    queries = model.standardizer.transform(as_values(rows))
    _check_complete(queries)
    distances = (
        np.sum(queries**2, axis=1)[:, None]
        - 2.0 * queries @ model.rows.T
        + np.sum(model.rows**2, axis=1)[None, :]
    )
    distances = np.maximum(distances, 0.0)
    return np.argsort(distances, axis=1, kind="stable")[:, : model.k]


def knn_predict(model: KnnModel, rows) -> np.ndarray:
    """Mean neighbour target, or the short-class vote share when classifying."""
    neighbours = knn_neighbours(model, rows)
    return model.targets[neighbours].mean(axis=1)


# END: k-nearest neighbours


# BEGIN: linear models
@dataclass(frozen=True)
class LinearModel:
    """Weights on the original column scale."""

    weights: np.ndarray
    intercept: float
    link: str = IDENTITY
    ridge_alpha: float = 0.0
    iterations: int = 0


def _solve(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if system.size and np.linalg.matrix_rank(system) < system.shape[0]:
        raise SingularSystem("normal equations are rank deficient")
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(str(e)) from e


def _ridge(z: np.ndarray, y: np.ndarray, alpha: float) -> Tuple[np.ndarray, float]:
    y_mean = y.mean()
    system = z.T @ z + alpha * np.eye(z.shape[1])
    return _solve(system, z.T @ (y - y_mean)), y_mean


def _irls(
    z: np.ndarray, y: np.ndarray, alpha: float, tolerance: float, max_iter: int
) -> Tuple[np.ndarray, float, int]:
    design = np.hstack([np.ones((z.shape[0], 1)), z])
    penalty = alpha * np.eye(design.shape[1])
    penalty[0, 0] = 0.0
    w = np.zeros(design.shape[1])

    def objective(w):
        margin = design @ w
        return float(np.sum(np.logaddexp(0.0, margin) - y * margin) + 0.5 * w @ penalty @ w)

    for iteration in range(1, max_iter + 1):
        p = sigmoid(design @ w)
        gradient = design.T @ (p - y) + penalty @ w
        if np.linalg.norm(gradient) < tolerance:
            return w[1:], float(w[0]), iteration - 1
        curvature = (design * (p * (1 - p))[:, None]).T @ design + penalty
        step = _solve(curvature, gradient)
        # step halving keeps the Newton iteration monotone
        current, scale = objective(w), 1.0
        while objective(w - scale * step) > current and scale > 1e-10:
            scale /= 2
        w = w - scale * step
    p = sigmoid(design @ w)
    if np.linalg.norm(design.T @ (p - y) + penalty @ w) < tolerance:
        return w[1:], float(w[0]), max_iter
    raise NoConvergence(f"logistic regression did not converge in {max_iter} iterations")


def linear_fit(
    matrix,
    targets: Sequence[float],
    link: str = IDENTITY,
    ridge_alpha: float = 0.0,
    tolerance: float = Config.Tuning.LINEAR_TOLERANCE,
    max_iter: int = Config.Tuning.LINEAR_MAX_ITER,
) -> LinearModel:
    """Ridge regression (identity link) or penalized logistic regression (logit link).

    Both are solved on standardized columns and mapped back to the original
    scale. Columns constant on the training rows get weight 0. The intercept is
    never penalized.
    """
    values = as_values(matrix)
    _check_complete(values)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != values.shape[0]:
        raise DimensionMismatch(f"{y.shape[0]} targets for {values.shape[0]} rows")

    standardizer = Standardizer().fit(values)
    active = ~standardizer.constant
    z = standardizer.transform(values)[:, active]
    iterations = 0
    if link == LOGIT:
        w_std, intercept_std, iterations = _irls(z, y, ridge_alpha, tolerance, max_iter)
    else:
        w_std, intercept_std = _ridge(z, y, ridge_alpha)

    weights = np.zeros(values.shape[1])
    weights[active] = w_std / standardizer.scale[active]
    intercept = intercept_std - float(np.dot(weights, standardizer.mean))
    return LinearModel(weights, intercept, link, ridge_alpha, iterations)


def linear_predict(model: LinearModel, rows) -> np.ndarray:
    """Linear response, or its probability under the logit link."""
    margin = as_values(rows) @ model.weights + model.intercept
    return sigmoid(margin) if model.link == LOGIT else margin


# END: linear models


# BEGIN: random forest
@dataclass(frozen=True)
class ForestModel:
    """Bagged regression trees, each with its own bootstrap mean offset."""

    trees: Tuple[RegressionTree, ...]
    offsets: Tuple[float, ...]
    task: str
    seeds: Tuple[int, ...] = ()
    colsample_bytree: float = 1.0
    in_bag: Tuple[np.ndarray, ...] = field(default=(), compare=False, repr=False)

    @property
    def n_trees(self) -> int:
        """Number of trees."""
        return len(self.trees)

    def tree_predictions(self, rows) -> np.ndarray:
        """One row of predictions per tree."""
        values = as_values(rows)
        return np.stack(
            [offset + tree.predict(values) for tree, offset in zip(self.trees, self.offsets)]
        )


def _grow_bagged(
    values, y, order, params: HyperParams, seed_seq, bootstrap: bool
) -> Tuple[RegressionTree, float, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    n_rows, n_cols = values.shape
    if bootstrap:
        counts = np.bincount(rng.integers(0, n_rows, size=n_rows), minlength=n_rows).astype(float)
    else:
        counts = np.ones(n_rows)
    col_mask = np.ones(n_cols, dtype=bool)
    if params.colsample_bytree < 1.0:
        col_mask[:] = False
        size = max(1, int(round(params.colsample_bytree * n_cols)))
        col_mask[rng.choice(n_cols, size=size, replace=False)] = True

    offset = float(np.dot(counts, y) / counts.sum())
    # a row drawn c times weighs c in both statistics
    grad = counts * (offset - y)
    hess = counts
    tree = grow_tree(values, grad, hess, counts > 0, col_mask, params, order=order)
    return tree, offset, counts


def forest_fit(
    matrix,
    targets: Sequence[float],
    n_trees: int,
    params: HyperParams,
    seed: int,
    task: str,
    bootstrap: bool = True,
    threads: int = 1,
) -> ForestModel:
    """Fit n_trees unshrunk trees on bootstrap samples.

    Per-tree generators are spawned from the master seed, so the forest does
    not depend on the number of threads.
    """
    if n_trees < 1:
        raise DimensionMismatch("a forest needs at least one tree")
    values = as_values(matrix)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != values.shape[0]:
        raise DimensionMismatch(f"{y.shape[0]} targets for {values.shape[0]} rows")
    order = presort(values)
    children = np.random.SeedSequence(seed).spawn(n_trees)
    grown = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_grow_bagged)(values, y, order, params, child, bootstrap) for child in children
    )
    logger.debug("grew %d forest trees", n_trees)
    return ForestModel(
        trees=tuple(g[0] for g in grown),
        offsets=tuple(g[1] for g in grown),
        task=task,
        seeds=tuple(int(child.spawn_key[-1]) for child in children),
        colsample_bytree=params.colsample_bytree,
        in_bag=tuple(g[2] > 0 for g in grown),
    )


def forest_predict(model: ForestModel, rows) -> np.ndarray:
    """Mean over trees, or the short-class vote share when classifying."""
    predictions = model.tree_predictions(rows)
    if model.task == Config.Families.CLASSIFY:
        return (predictions >= 0.5).mean(axis=0)
    return predictions.mean(axis=0)


def forest_oob_error(model: ForestModel, matrix, targets: Sequence[float]) -> float:
    """Out-of-bag squared error (regression) or misclassification rate.

    Each row is predicted by the trees that did not draw it; rows drawn by every
    tree are skipped.
    """
    if not model.in_bag:
        raise DimensionMismatch("the forest carries no bootstrap record")
    predictions = model.tree_predictions(matrix)
    y = np.asarray(targets, dtype=float).reshape(-1)
    out_of_bag = ~np.stack(model.in_bag)
    usable = out_of_bag.any(axis=0)
    if model.task == Config.Families.CLASSIFY:
        predictions = (predictions >= 0.5).astype(float)
    totals = np.where(out_of_bag, predictions, 0.0).sum(axis=0)
    counts = out_of_bag.sum(axis=0)
    estimate = totals[usable] / counts[usable]
    if model.task == Config.Families.CLASSIFY:
        return float(np.mean((estimate >= 0.5) != (y[usable] == 1)))
    return float(np.mean((estimate - y[usable]) ** 2))


# END: random forest


# BEGIN: estimators
class KnnParams(BaseModel):
    """kNN settings."""

    k: int = Field(5, ge=1)

    class Config:
        extra = "forbid"


class LinearParams(BaseModel):
    """Ridge/logistic settings."""

    ridge_alpha: float = Field(1.0, ge=0)

    class Config:
        extra = "forbid"


class ForestParams(BaseModel):
    """Random-forest settings."""

    n_trees: int = Field(100, ge=1)
    max_depth: int = Field(12, ge=1)
    min_child_weight: float = Field(1.0, ge=0)
    colsample_bytree: float = Field(1.0, gt=0, le=1)
    bootstrap: bool = True

    class Config:
        extra = "forbid"

    def tree_params(self) -> HyperParams:
        """Unregularized grower settings."""
        return HyperParams(
            max_depth=self.max_depth,
            min_child_weight=self.min_child_weight,
            colsample_bytree=self.colsample_bytree,
            reg_lambda=0.0,
            gamma=0.0,
        )


class _ImputingEstimator(Estimator):
    """Families that see median-imputed columns."""

    imputer: Optional[MedianImputer] = None

    def _impute_fit(self, values: np.ndarray) -> np.ndarray:
        self.imputer = MedianImputer().fit(values)
        return self.imputer.transform(values)

    def _imputer_document(self) -> List[float]:
        return self.imputer.medians.tolist()


@register(Config.Families.KNN)
class KnnEstimator(_ImputingEstimator):
    """k-nearest neighbours on standardized, median-imputed columns."""

    model: Optional[KnnModel] = None

    @override
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        params = validated(KnnParams, self.params)
        self.model = knn_fit(self._impute_fit(values), targets, params.k, self.task)

    @override
    def _score(self, values: np.ndarray) -> np.ndarray:
        return knn_predict(self.model, self.imputer.transform(values))

    @override
    def _model_document(self) -> Dict[str, Any]:
        return {
            "medians": self._imputer_document(),
            "rows": self.model.rows.tolist(),
            "targets": self.model.targets.tolist(),
            "k": self.model.k,
            "mean": self.model.standardizer.mean.tolist(),
            "scale": self.model.standardizer.scale.tolist(),
        }

    @override
    def _load_model(self, document: Dict[str, Any]) -> None:
        self.imputer = MedianImputer(document["medians"])
        standardizer = Standardizer(document["mean"], document["scale"])
        rows = np.asarray(document["rows"], dtype=float)
        self.model = KnnModel(
            rows.reshape(-1, len(self.schema)),
            np.asarray(document["targets"], dtype=float),
            int(document["k"]),
            self.task,
            standardizer,
        )


@register(Config.Families.LINEAR)
class LinearEstimator(_ImputingEstimator):
    """Ridge regression or logistic regression on median-imputed columns."""

    model: Optional[LinearModel] = None

    @override
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        params = validated(LinearParams, self.params)
        link = LOGIT if self.classifies else IDENTITY
        self.model = linear_fit(self._impute_fit(values), targets, link, params.ridge_alpha)

    @override
    def _score(self, values: np.ndarray) -> np.ndarray:
        return linear_predict(self.model, self.imputer.transform(values))

    @override
    def _model_document(self) -> Dict[str, Any]:
        return {
            "medians": self._imputer_document(),
            "weights": self.model.weights.tolist(),
            "intercept": self.model.intercept,
            "link": self.model.link,
            "ridge_alpha": self.model.ridge_alpha,
        }

    @override
    def _load_model(self, document: Dict[str, Any]) -> None:
        self.imputer = MedianImputer(document["medians"])
        self.model = LinearModel(
            np.asarray(document["weights"], dtype=float),
            float(document["intercept"]),
            str(document["link"]),
            float(document["ridge_alpha"]),
        )


@register(Config.Families.FOREST)
class ForestEstimator(Estimator):
    """Random forest on raw columns; MISSING follows learned default directions."""

    model: Optional[ForestModel] = None

    @override
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        params = validated(ForestParams, self.params)
        self.model = forest_fit(
            values,
            targets,
            params.n_trees,
            params.tree_params(),
            self.seed,
            self.task,
            bootstrap=params.bootstrap,
            threads=self.threads,
        )

    @override
    def _score(self, values: np.ndarray) -> np.ndarray:
        return forest_predict(self.model, values)

    @override
    def _model_document(self) -> Dict[str, Any]:
        return {
            "trees": [tree.to_document() for tree in self.model.trees],
            "offsets": list(self.model.offsets),
            "seeds": list(self.model.seeds),
            "colsample_bytree": self.model.colsample_bytree,
        }

    @override
    def _load_model(self, document: Dict[str, Any]) -> None:
        self.model = ForestModel(
            trees=tuple(RegressionTree.from_document(t) for t in document["trees"]),
            offsets=tuple(float(o) for o in document["offsets"]),
            task=self.task,
            seeds=tuple(int(s) for s in document["seeds"]),
            colsample_bytree=float(document["colsample_bytree"]),
        )


@register(Config.Families.MEAN)
class MeanEstimator(Estimator):
    """Constant predictor: training mean duration, or the short-class rate."""

    value: float = 0.0

    @override
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        if not targets.size:
            raise DimensionMismatch("cannot average an empty target")
        self.value = float(targets.mean())

    @override
    def _score(self, values: np.ndarray) -> np.ndarray:
        return np.full(values.shape[0], self.value)

    @override
    def _model_document(self) -> Dict[str, Any]:
        return {"value": self.value}

    @override
    def _load_model(self, document: Dict[str, Any]) -> None:
        self.value = float(document["value"])


# END: estimators
