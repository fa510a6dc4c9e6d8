"""Regularized second-order gradient tree boosting.

Trees are grown exact-greedy: every distinct threshold of every sampled column is
scored with the second-order gain, rows with MISSING in the split column are
tried on both sides and the better side becomes the node's default direction.
With reg_lambda = gamma = 0 the booster is plain GBDT.

Regularizer naming follows the common tree-boosting convention: ``gamma`` is the
per-leaf complexity penalty and ``reg_lambda`` the L2 penalty on leaf weights.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from overrides import override
from pydantic import BaseModel, Field

from config import Config
from exceptions import (
    BadParams,
    CorruptModel,
    DimensionMismatch,
    NonPositiveTarget,
    SchemaMismatch,
)
from learners.base import Estimator, register, validated
from records import ColumnSpec, FeatureMatrix

logger = logging.getLogger(__name__)

CURVATURE_FLOOR = Config.Booster.CURVATURE_FLOOR
# exp() of a log-space margin is taken at most at this value
MAX_LOG_MARGIN = 50.0


class HyperParams(BaseModel):
    """Tunable booster configuration."""

    max_depth: int = Field(6, ge=1)
    learning_rate: float = Field(0.3, gt=0, le=1)
    min_child_weight: float = Field(1.0, ge=0)
    gamma: float = Field(0.0, ge=0)
    reg_lambda: float = Field(1.0, ge=0)
    subsample: float = Field(1.0, gt=0, le=1)
    colsample_bytree: float = Field(1.0, gt=0, le=1)
    scale_pos_weight: float = Field(1.0, gt=0)
    n_rounds: int = Field(100, ge=0)

    class Config:
        allow_mutation = False
        extra = "forbid"


@dataclass(frozen=True)
class LossSpec:
    """Training loss and its curvature floor."""

    kind: str = Config.Booster.SQUARED_ERROR
    curvature_floor: float = CURVATURE_FLOOR

    def __post_init__(self):
        if self.kind not in Config.Booster.LOSSES:
            raise ValueError(f"unknown loss {self.kind}")


def as_values(matrix) -> np.ndarray:
    """Float grid of a FeatureMatrix or array-like."""
    if isinstance(matrix, FeatureMatrix):
        return matrix.values
    return np.atleast_2d(np.asarray(matrix, dtype=float))


def sigmoid(margin: np.ndarray) -> np.ndarray:
    """Logistic function."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(margin, dtype=float)))


# BEGIN: losses
def loss_derivatives(loss: LossSpec, y, yhat) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row gradient and curvature of the loss at the current prediction."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"{y.shape} targets vs {yhat.shape} predictions")
    floor = loss.curvature_floor

    if loss.kind == Config.Booster.SQUARED_ERROR:
        return yhat - y, np.ones_like(y)
    if loss.kind == Config.Booster.LOGISTIC:
        p = sigmoid(yhat)
        return p - y, np.maximum(p * (1.0 - p), floor)
    if loss.kind == Config.Booster.ABSOLUTE:
        return np.sign(yhat - y), np.full_like(y, floor)
    # mape
    if (y <= 0).any():
        raise NonPositiveTarget("mape loss needs strictly positive targets")
    return np.sign(yhat - y) / y, np.maximum(1.0 / y, floor)


def log_mape_derivatives(loss: LossSpec, y, margin) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient and curvature of |exp(margin) - y| / y with respect to a log-space margin.

    The relative error is measured in target units, so targets in (0, 1] are valid
    although their logarithm is not positive.
    """
    y = np.asarray(y, dtype=float)
    margin = np.asarray(margin, dtype=float)
    if y.shape != margin.shape:
        raise DimensionMismatch(f"{y.shape} targets vs {margin.shape} predictions")
    if (y <= 0).any():
        raise NonPositiveTarget("mape loss needs strictly positive targets")
    ratio = np.exp(np.minimum(margin, MAX_LOG_MARGIN)) / y
    return np.sign(ratio - 1.0) * ratio, np.maximum(ratio, loss.curvature_floor)


def loss_value(loss: LossSpec, y, yhat) -> np.ndarray:
    """Per-row loss whose derivative loss_derivatives returns."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if loss.kind == Config.Booster.SQUARED_ERROR:
        return 0.5 * (yhat - y) ** 2
    if loss.kind == Config.Booster.LOGISTIC:
        # y*log(p) + (1-y)*log(1-p), written stably on the margin
        return np.logaddexp(0.0, yhat) - y * yhat
    if loss.kind == Config.Booster.ABSOLUTE:
        return np.abs(yhat - y)
    return np.abs(yhat - y) / y


# END: losses


# BEGIN: trees
@dataclass(frozen=True)
class TreeNode:
    """Internal node when feature_index >= 0, leaf otherwise.

    Internal nodes keep the weight they would have as a leaf.
    """

    weight: float
    feature_index: int = -1
    threshold: float = 0.0
    default_left: bool = True
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        """Whether the node routes no further."""
        return self.feature_index < 0


@dataclass(frozen=True)
class RegressionTree:
    """Nodes in pre-order; node 0 is the root."""

    nodes: Tuple[TreeNode, ...]

    @cached_property
    def _arrays(self) -> Dict[str, np.ndarray]:
        return {
            "feature": np.array([n.feature_index for n in self.nodes], dtype=int),
            "threshold": np.array([n.threshold for n in self.nodes], dtype=float),
            "default_left": np.array([n.default_left for n in self.nodes], dtype=bool),
            "left": np.array([n.left for n in self.nodes], dtype=int),
            "right": np.array([n.right for n in self.nodes], dtype=int),
            "weight": np.array([n.weight for n in self.nodes], dtype=float),
        }

    @property
    def n_leaves(self) -> int:
        """Number of leaves."""
        return sum(1 for n in self.nodes if n.is_leaf)

    def split_features(self) -> List[int]:
        """Column indices used by internal nodes."""
        return sorted({n.feature_index for n in self.nodes if not n.is_leaf})

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        a = self._arrays
        node = np.zeros(values.shape[0], dtype=int)
        active = np.arange(values.shape[0])
        while active.size:
            feature = a["feature"][node[active]]
            internal = feature >= 0
            active, feature = active[internal], feature[internal]
            if not active.size:
                break
            current = node[active]
            cell = values[active, feature]
            go_left = np.where(
                np.isnan(cell), a["default_left"][current], cell <= a["threshold"][current]
            )
            node[active] = np.where(go_left, a["left"][current], a["right"][current])
        return node

    def predict(self, values: np.ndarray) -> np.ndarray:
        """Leaf weight reached by every row."""
        return self._arrays["weight"][self.apply(values)]

    def to_document(self) -> Dict[str, List]:
        """Node arrays."""
        return {key: array.tolist() for key, array in self._arrays.items()}

    @classmethod
    def from_document(cls, document: Dict[str, List]) -> "RegressionTree":
        """Inverse of to_document."""
        columns = [
            document["weight"],
            document["feature"],
            document["threshold"],
            document["default_left"],
            document["left"],
            document["right"],
        ]
        if len({len(c) for c in columns}) != 1 or not columns[0]:
            raise CorruptModel("tree arrays have inconsistent lengths")
        nodes = tuple(
            TreeNode(float(w), int(f), float(t), bool(d), int(lft), int(rgt))
            for w, f, t, d, lft, rgt in zip(*columns)
        )
        size = len(nodes)
        for node in nodes:
            if not node.is_leaf and not (0 < node.left < size and 0 < node.right < size):
                raise CorruptModel("tree child index out of range")
        return cls(nodes)


def presort(values: np.ndarray) -> np.ndarray:
    """Per-column row order, ascending, MISSING last; shape (n_cols, n_rows)."""
    return np.argsort(values, axis=0, kind="stable").T


def _compact(order: np.ndarray, member: np.ndarray) -> np.ndarray:
    """Keep, column by column, the rows flagged in member, preserving order."""
    if not order.shape[0]:
        return order
    keep = member[order]
    return order[keep].reshape(order.shape[0], -1)


def split_gain(g_left, h_left, g_right, h_right, reg_lambda: float, gamma: float):
    """Second-order loss reduction of a split, minus the per-leaf penalty."""
    g_total = g_left + g_right
    h_total = h_left + h_right
    with np.errstate(divide="ignore", invalid="ignore"):
        return (
            0.5
            * (
                g_left**2 / (h_left + reg_lambda)
                + g_right**2 / (h_right + reg_lambda)
                - g_total**2 / (h_total + reg_lambda)
            )
            - gamma
        )


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    """Closed-form optimal leaf weight."""
    denominator = h_sum + reg_lambda
    return 0.0 if denominator == 0 else -g_sum / denominator


def _threshold(low: float, high: float) -> float:
    middle = low + (high - low) / 2
    return low if middle >= high else middle


class _TreeBuilder:
    """Exact-greedy grower over column-presorted row orders."""

    def __init__(self, values, grad, hess, cols, params: HyperParams):
        self.values = values
        self.grad = grad
        self.hess = hess
        self.cols = cols
        self.columns = values[:, cols].T
        self.params = params
        self.nodes: List[Optional[TreeNode]] = []

    def build(self, rows: np.ndarray, order: np.ndarray) -> RegressionTree:
        member = np.zeros(self.values.shape[0], dtype=bool)
        member[rows] = True
        self._grow(rows, _compact(order, member), depth=0)
        return RegressionTree(tuple(self.nodes))

    def _grow(self, rows: np.ndarray, order: np.ndarray, depth: int) -> int:
        params = self.params
        g_sum = float(self.grad[rows].sum())
        h_sum = float(self.hess[rows].sum())
        node_id = len(self.nodes)
        weight = leaf_weight(g_sum, h_sum, params.reg_lambda)
        self.nodes.append(TreeNode(weight))

        if depth >= params.max_depth or rows.size < 2 or not self.cols.size:
            return node_id
        split = self._best_split(order)
        if split is None:
            return node_id

        feature, threshold, default_left, gain = split
        cell = self.values[rows, feature]
        go_left = np.where(np.isnan(cell), default_left, cell <= threshold)
        member = np.zeros(self.values.shape[0], dtype=bool)
        member[rows[go_left]] = True
        logger.debug(
            "depth %d: split column %d at %.6g (gain %.6g, %d/%d rows left)",
            depth,
            feature,
            threshold,
            gain,
            int(go_left.sum()),
            rows.size,
        )
        left = self._grow(rows[go_left], _compact(order, member), depth + 1)
        right = self._grow(rows[~go_left], _compact(order, ~member), depth + 1)
        self.nodes[node_id] = TreeNode(weight, int(feature), threshold, default_left, left, right)
        return node_id

    def _best_split(self, order: np.ndarray):
        params = self.params
        n_features, n_rows = order.shape
        cells = np.take_along_axis(self.columns, order, axis=1)
        present = ~np.isnan(cells)
        g = np.where(present, self.grad[order], 0.0)
        h = np.where(present, self.hess[order], 0.0)
        g_cum = np.cumsum(g, axis=1)
        h_cum = np.cumsum(h, axis=1)
        g_left, h_left = g_cum[:, :-1], h_cum[:, :-1]
        g_right, h_right = g_cum[:, -1:] - g_left, h_cum[:, -1:] - h_left
        # exactly zero when the node has no MISSING cell in the column
        g_missing = np.where(present, 0.0, self.grad[order]).sum(axis=1, keepdims=True)
        h_missing = np.where(present, 0.0, self.hess[order]).sum(axis=1, keepdims=True)

        # a threshold sits between two consecutive distinct present values
        valid = present[:, :-1] & present[:, 1:] & (cells[:, 1:] > cells[:, :-1])
        mcw = params.min_child_weight

        # MISSING routed right
        gain_right = split_gain(
            g_left,
            h_left,
            g_right + g_missing,
            h_right + h_missing,
            params.reg_lambda,
            params.gamma,
        )
        ok = valid & (h_left >= mcw) & (h_right + h_missing >= mcw)
        gain_right = np.where(ok, gain_right, -np.inf)

        # MISSING routed left
        gain_left = split_gain(
            g_left + g_missing,
            h_left + h_missing,
            g_right,
            h_right,
            params.reg_lambda,
            params.gamma,
        )
        ok = valid & (h_left + h_missing >= mcw) & (h_right >= mcw)
        gain_left = np.where(ok, gain_left, -np.inf)

        prefer_left = gain_left >= gain_right
        best = np.where(prefer_left, gain_left, gain_right)
        best = np.where(np.isnan(best), -np.inf, best)
        # argmax takes the first maximum: lowest column, then lowest threshold
        flat = int(np.argmax(best))
        f, p = divmod(flat, n_rows - 1)
        gain = float(best[f, p])
        if not gain > 0:
            return None
        threshold = _threshold(float(cells[f, p]), float(cells[f, p + 1]))
        return int(self.cols[f]), threshold, bool(prefer_left[f, p]), gain


def grow_tree(
    matrix,
    grad: Sequence[float],
    hess: Sequence[float],
    row_mask: Optional[Sequence[bool]],
    col_mask: Optional[Sequence[bool]],
    params: HyperParams,
    order: Optional[np.ndarray] = None,
) -> RegressionTree:
    """Grow one regression tree on gradient statistics.

    Args:
        matrix: FeatureMatrix or float grid; NaN cells are MISSING.
        grad: per-row gradient.
        hess: per-row curvature, at least the curvature floor on unmasked rows.
        row_mask: rows taking part, all rows when None.
        col_mask: columns that may be split on, all columns when None.
        params: depth, child-weight and regularization settings.
        order: presort(values) when the caller already has it.

    Returns:
        The grown tree; a single leaf when no split has positive gain.
    """
    values = as_values(matrix)
    n_rows, n_cols = values.shape
    grad = np.asarray(grad, dtype=float).reshape(-1)
    hess = np.asarray(hess, dtype=float).reshape(-1)
    if grad.shape[0] != n_rows or hess.shape[0] != n_rows:
        raise DimensionMismatch(f"{grad.shape[0]}/{hess.shape[0]} statistics for {n_rows} rows")
    if row_mask is None:
        row_mask = np.ones(n_rows, dtype=bool)
    if col_mask is None:
        col_mask = np.ones(n_cols, dtype=bool)
    row_mask = np.asarray(row_mask, dtype=bool)
    col_mask = np.asarray(col_mask, dtype=bool)
    if row_mask.shape[0] != n_rows or col_mask.shape[0] != n_cols:
        raise DimensionMismatch("mask length does not match the matrix")

    cols = np.flatnonzero(col_mask)
    if order is None:
        order = presort(values)
    builder = _TreeBuilder(values, grad, hess, cols, params)
    return builder.build(np.flatnonzero(row_mask), order[cols])


# END: trees


# BEGIN: ensembles
@dataclass(frozen=True)
class TreeEnsemble:
    """Additive trees: base_score plus learning-rate-scaled leaf weights."""

    trees: Tuple[RegressionTree, ...]
    base_score: float
    learning_rate: float
    objective: str = Config.Booster.SQUARED_ERROR
    target_transform: str = Config.Booster.IDENTITY
    schema: Tuple[ColumnSpec, ...] = ()
    dictionaries: Dict[str, List[str]] = field(default_factory=dict)
    params: Optional[HyperParams] = None

    def check_schema(self, matrix) -> np.ndarray:
        """Float grid of matrix after checking it against the training schema."""
        values = as_values(matrix)
        if isinstance(matrix, FeatureMatrix) and self.schema:
            if tuple(matrix.schema) != tuple(self.schema):
                theirs = {c.name for c in matrix.schema}
                lost = [c.name for c in self.schema if c.name not in theirs]
                column = lost[0] if lost else None
                raise SchemaMismatch(
                    f"matrix schema differs from the training schema (missing {column})",
                    column,
                )
        elif self.schema and values.shape[1] != len(self.schema):
            raise SchemaMismatch(f"expected {len(self.schema)} columns, got {values.shape[1]}")
        return values

    def predict_margin(self, matrix) -> np.ndarray:
        """Raw additive score, before the inverse transform."""
        values = self.check_schema(matrix)
        margin = np.full(values.shape[0], self.base_score)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(values)
        return margin

    def predict(self, matrix) -> np.ndarray:
        """Prediction in target units: minutes, or a probability for logistic."""
        margin = self.predict_margin(matrix)
        if self.objective == Config.Booster.LOGISTIC:
            return sigmoid(margin)
        if self.target_transform == Config.Booster.LOG:
            return np.exp(margin)
        return margin

    def predict_class(self, matrix) -> np.ndarray:
        """Labels {0, 1} from the logistic probability."""
        return (self.predict(matrix) >= 0.5).astype(int)


def _column_sample(rng: np.random.Generator, n_cols: int, fraction: float) -> np.ndarray:
    mask = np.zeros(n_cols, dtype=bool)
    if fraction >= 1.0:
        mask[:] = True
        return mask
    size = max(1, int(round(fraction * n_cols)))
    mask[rng.choice(n_cols, size=size, replace=False)] = True
    return mask


def train(
    matrix,
    targets: Sequence[float],
    loss: LossSpec,
    params: HyperParams,
    seed: int = 0,
    target_transform: str = Config.Booster.IDENTITY,
) -> TreeEnsemble:
    """Fit a boosted ensemble.

    Each round computes gradient statistics at the current prediction, samples
    rows (Bernoulli, rate subsample) and columns (without replacement, fraction
    colsample_bytree) from the seeded generator, grows one tree and adds it with
    shrinkage. Logistic rows labelled 1 weigh scale_pos_weight.
    """
    values = as_values(matrix)
    n_rows, n_cols = values.shape
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != n_rows:
        raise DimensionMismatch(f"{y.shape[0]} targets for {n_rows} rows")

    if target_transform == Config.Booster.LOG:
        if (y <= 0).any():
            raise NonPositiveTarget("log-space training needs strictly positive targets")
        z = np.log(y)
    else:
        z = y
    if loss.kind == Config.Booster.MAPE and (y <= 0).any():
        raise NonPositiveTarget("mape loss needs strictly positive targets")
    # mape on a log margin keeps its relative error in target units
    log_mape = loss.kind == Config.Booster.MAPE and target_transform == Config.Booster.LOG

    if loss.kind == Config.Booster.LOGISTIC:
        rate = float(np.clip(z.mean(), 1e-6, 1 - 1e-6)) if n_rows else 0.5
        base_score = float(np.log(rate / (1 - rate)))
    else:
        base_score = float(z.mean()) if n_rows else 0.0

    rng = np.random.default_rng(seed)
    order = presort(values)
    margin = np.full(n_rows, base_score)
    class_weight = None
    if loss.kind == Config.Booster.LOGISTIC and params.scale_pos_weight != 1.0:
        class_weight = np.where(z == 1, params.scale_pos_weight, 1.0)

    trees = []
    for round_ in range(params.n_rounds):
        if log_mape:
            grad, hess = log_mape_derivatives(loss, y, margin)
        else:
            grad, hess = loss_derivatives(loss, z, margin)
        if class_weight is not None:
            grad, hess = grad * class_weight, hess * class_weight
        if params.subsample < 1.0:
            row_mask = rng.random(n_rows) < params.subsample
        else:
            row_mask = np.ones(n_rows, dtype=bool)
        col_mask = _column_sample(rng, n_cols, params.colsample_bytree)
        tree = grow_tree(values, grad, hess, row_mask, col_mask, params, order=order)
        margin += params.learning_rate * tree.predict(values)
        trees.append(tree)
        if logger.isEnabledFor(logging.DEBUG):
            if log_mape:
                value = loss_value(loss, y, np.exp(np.minimum(margin, MAX_LOG_MARGIN)))
            else:
                value = loss_value(loss, z, margin)
            logger.debug(
                "round %d: %d leaves, training loss %.6g",
                round_,
                tree.n_leaves,
                float(value.mean()),
            )

    encoder = matrix.encoder if isinstance(matrix, FeatureMatrix) else None
    return TreeEnsemble(
        trees=tuple(trees),
        base_score=base_score,
        learning_rate=params.learning_rate,
        objective=loss.kind,
        target_transform=target_transform,
        schema=tuple(matrix.schema) if isinstance(matrix, FeatureMatrix) else (),
        dictionaries=encoder.to_document() if encoder else {},
        params=params,
    )


def predict(ensemble: TreeEnsemble, matrix) -> np.ndarray:
    """Prediction of an ensemble, in target units."""
    return ensemble.predict(matrix)


# END: ensembles


# BEGIN: documents
def to_document(ensemble: TreeEnsemble) -> Dict[str, Any]:
    """Plain-data form of an ensemble."""
    return {
        "base_score": ensemble.base_score,
        "learning_rate": ensemble.learning_rate,
        "objective": ensemble.objective,
        "target_transform": ensemble.target_transform,
        "schema": [[c.name, c.kind] for c in ensemble.schema],
        "dictionaries": ensemble.dictionaries,
        "params": ensemble.params.dict() if ensemble.params else None,
        "trees": [tree.to_document() for tree in ensemble.trees],
    }


def from_document(document: Dict[str, Any]) -> TreeEnsemble:
    """Inverse of to_document."""
    try:
        params = document["params"]
        return TreeEnsemble(
            trees=tuple(RegressionTree.from_document(t) for t in document["trees"]),
            base_score=float(document["base_score"]),
            learning_rate=float(document["learning_rate"]),
            objective=str(document["objective"]),
            target_transform=str(document["target_transform"]),
            schema=tuple(ColumnSpec(name, kind) for name, kind in document["schema"]),
            dictionaries={k: list(v) for k, v in document["dictionaries"].items()},
            params=HyperParams(**params) if params is not None else None,
        )
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise CorruptModel(f"invalid ensemble document: {e}") from e


def serialize(ensemble: TreeEnsemble) -> str:
    """Self-describing JSON text of an ensemble."""
    document = {
        "format": Config.DOCUMENT_FORMAT,
        "version": Config.DOCUMENT_VERSION,
        "family": Config.Families.BOOSTER,
        "ensemble": to_document(ensemble),
    }
    return json.dumps(document)


def deserialize(text: str) -> TreeEnsemble:
    """Inverse of serialize."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptModel(f"model document is not valid JSON: {e}") from e
    if not isinstance(document, dict) or document.get("format") != Config.DOCUMENT_FORMAT:
        raise CorruptModel("not a model document")
    if "ensemble" not in document:
        raise CorruptModel("model document holds no ensemble")
    return from_document(document["ensemble"])


# END: documents


# BEGIN: estimators
@register(Config.Families.BOOSTER)
class BoosterEstimator(Estimator):
    """Booster behind the estimator interface.

    Classifiers train on the logistic loss; regressors default to the mape loss.
    """

    ensemble: Optional[TreeEnsemble] = None

    def hyper_params(self) -> HyperParams:
        """Validated booster parameters."""
        return validated(HyperParams, self.params)

    def loss_spec(self) -> LossSpec:
        """Training loss for the task."""
        if self.classifies:
            return LossSpec(Config.Booster.LOGISTIC)
        kind = self.loss or Config.Booster.MAPE
        if kind not in Config.Booster.REGRESSION_LOSSES:
            raise BadParams(f"{kind} is not a regression loss")
        return LossSpec(kind)

    @override
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        transform = Config.Booster.IDENTITY
        if self.log_space and not self.classifies:
            transform = Config.Booster.LOG
        self.ensemble = train(
            values, targets, self.loss_spec(), self.hyper_params(), self.seed, transform
        )

    @override
    def _score(self, values: np.ndarray) -> np.ndarray:
        return self.ensemble.predict(values)

    @override
    def _model_document(self) -> Dict[str, Any]:
        return to_document(self.ensemble)

    @override
    def _load_model(self, document: Dict[str, Any]) -> None:
        self.ensemble = from_document(document)


@register(Config.Families.GBDT)
class GbdtEstimator(BoosterEstimator):
    """Plain gradient boosting: the booster with both regularizers at zero."""

    @override
    def hyper_params(self) -> HyperParams:
        params = {**self.params, "reg_lambda": 0.0, "gamma": 0.0}
        return validated(HyperParams, params)


# END: estimators
