"""Cross-validation, randomized hyperparameter search and nested evaluation."""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from pydantic import BaseModel, root_validator, validator

from config import Config
from exceptions import (
    ClassTooSmall,
    FoldError,
    IncidentToolkitError,
    NonBinary,
    ZeroVariance,
)
from learners import Estimator, LearnerSpec
from metrics import SCORERS
from records import FeatureMatrix

logger = logging.getLogger(__name__)

INT = "int"
UNIFORM = "uniform"
LOGUNIFORM = "loguniform"
FIXED = "fixed"


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed of a master seed."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


# BEGIN: fold plans
@dataclass(frozen=True)
class FoldPlan:
    """Per-row test-fold index."""

    k: int
    assignments: np.ndarray
    seed: int
    stratify_on: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        assignments = np.array(self.assignments, dtype=int)
        assignments.setflags(write=False)
        object.__setattr__(self, "assignments", assignments)

    @property
    def n_rows(self) -> int:
        """Rows covered by the plan."""
        return self.assignments.shape[0]

    def test_rows(self, fold: int) -> np.ndarray:
        """Rows held out in a fold."""
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        """Rows trained on in a fold."""
        return np.flatnonzero(self.assignments != fold)

    def splits(self) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """(fold, train rows, test rows) for every fold."""
        for fold in range(self.k):
            yield fold, self.train_rows(fold), self.test_rows(fold)


def stratified_folds(labels: Sequence[int], k: int, seed: int) -> FoldPlan:
    """Stratified k-fold plan.

    Each class is shuffled with the seeded generator and dealt round-robin; the
    dealing position carries over from one class to the next so fold sizes stay
    balanced too.
    """
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise NonBinary("stratification labels must be 0 or 1")
    if k < 2:
        raise ClassTooSmall(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.shape[0], dtype=int)
    offset = 0
    for value in (1.0, 0.0):
        members = np.flatnonzero(labels == value)
        if members.size < k:
            raise ClassTooSmall(f"class {int(value)} has {members.size} rows for {k} folds")
        members = rng.permutation(members)
        assignments[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return FoldPlan(k, assignments, seed, stratify_on=labels)


def kfold(n_rows: int, k: int, seed: int) -> FoldPlan:
    """Shuffled, unstratified k-fold plan."""
    if k < 2 or n_rows < k:
        raise ClassTooSmall(f"{n_rows} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n_rows, dtype=int)
    assignments[rng.permutation(n_rows)] = np.arange(n_rows) % k
    return FoldPlan(k, assignments, seed)


def objective_for(task: str) -> str:
    """Search objective of a stage: F1 when classifying, MAPE when regressing."""
    if task == Config.Families.CLASSIFY:
        return Config.Tuning.CLASSIFY_OBJECTIVE
    return Config.Tuning.REGRESS_OBJECTIVE


def plan_folds(task: str, targets: Sequence[float], k: int, seed: int) -> FoldPlan:
    """Stratified plan for classification, plain k-fold for regression."""
    if task == Config.Families.CLASSIFY:
        return stratified_folds(targets, k, seed)
    return kfold(len(targets), k, seed)


# END: fold plans


# BEGIN: search spaces
class Distribution(BaseModel):
    """Sampling rule of one hyperparameter."""

    dist: str
    low: Optional[float] = None
    high: Optional[float] = None
    value: Any = None

    @validator("dist")
    def _known(cls, value):
        if value not in (INT, UNIFORM, LOGUNIFORM, FIXED):
            raise ValueError(f"unknown distribution {value}")
        return value

    @root_validator(skip_on_failure=True)
    def _bounds(cls, values):
        if values["dist"] == FIXED:
            return values
        low, high = values.get("low"), values.get("high")
        if low is None or high is None or low > high:
            raise ValueError(f"invalid bounds [{low}, {high}]")
        if values["dist"] == LOGUNIFORM and low <= 0:
            raise ValueError("log-uniform bounds must be positive")
        return values

    def draw(self, rng: np.random.Generator) -> Any:
        """One value, as a plain Python scalar."""
        if self.dist == FIXED:
            return self.value
        if self.dist == INT:
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.dist == UNIFORM:
            return float(rng.uniform(self.low, self.high))
        return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))


@dataclass(frozen=True)
class SearchSpace:
    """Named distributions, drawn in insertion order."""

    distributions: Mapping[str, Distribution]

    def draw(self, rng: np.random.Generator) -> Dict[str, Any]:
        """One parameter vector."""
        return {name: d.draw(rng) for name, d in self.distributions.items()}

    @property
    def names(self) -> List[str]:
        """Parameter names."""
        return list(self.distributions)

    def to_document(self) -> Dict[str, Dict[str, Any]]:
        """Plain-data form, the inverse of load_search_space."""
        return {name: d.dict(exclude_none=True) for name, d in self.distributions.items()}


def load_search_space(document: Union[str, Mapping[str, Any]]) -> SearchSpace:
    """Search space from YAML text or a parsed mapping.

    Every entry is `name: {dist: int|uniform|loguniform|fixed, low, high, value}`;
    a bare scalar is shorthand for a fixed value.
    """
    if isinstance(document, str):
        document = yaml.safe_load(document) or {}
    distributions = {}
    for name, entry in document.items():
        if not isinstance(entry, Mapping):
            entry = {"dist": FIXED, "value": entry}
        distributions[str(name)] = Distribution(**entry)
    return SearchSpace(distributions)


_BOOSTER_SPACE = {
    "max_depth": {"dist": INT, "low": 2, "high": 10},
    "learning_rate": {"dist": LOGUNIFORM, "low": 0.01, "high": 0.5},
    "min_child_weight": {"dist": UNIFORM, "low": 0.0, "high": 10.0},
    "gamma": {"dist": LOGUNIFORM, "low": 1e-3, "high": 10.0},
    "reg_lambda": {"dist": LOGUNIFORM, "low": 1e-3, "high": 10.0},
    "subsample": {"dist": UNIFORM, "low": 0.5, "high": 1.0},
    "colsample_bytree": {"dist": UNIFORM, "low": 0.5, "high": 1.0},
    "scale_pos_weight": {"dist": UNIFORM, "low": 0.5, "high": 4.0},
    "n_rounds": {"dist": INT, "low": 50, "high": 500},
}

DEFAULT_SPACES: Dict[str, Dict[str, Dict[str, Any]]] = {
    Config.Families.BOOSTER: _BOOSTER_SPACE,
    Config.Families.GBDT: {
        name: d for name, d in _BOOSTER_SPACE.items() if name not in ("gamma", "reg_lambda")
    },
    Config.Families.FOREST: {
        "n_trees": {"dist": INT, "low": 20, "high": 200},
        "max_depth": {"dist": INT, "low": 2, "high": 12},
        "min_child_weight": {"dist": UNIFORM, "low": 1.0, "high": 10.0},
        "colsample_bytree": {"dist": UNIFORM, "low": 0.3, "high": 1.0},
    },
    Config.Families.KNN: {"k": {"dist": INT, "low": 1, "high": 30}},
    Config.Families.LINEAR: {"ridge_alpha": {"dist": LOGUNIFORM, "low": 1e-3, "high": 100.0}},
    Config.Families.MEAN: {},
}


def default_search_space(family: str) -> SearchSpace:
    """Documented default space of a learner family."""
    return load_search_space(DEFAULT_SPACES[family])


# END: search spaces


# BEGIN: results
@dataclass(frozen=True)
class FoldScores:
    """Train and test scores of one fold."""

    fold: int
    train: Dict[str, float]
    test: Dict[str, float]
    n_train: int
    n_test: int
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CVResult:
    """Per-fold scores of a cross-validation or nested evaluation.

    n_fits counts every estimator fit; inner_fits the fits made by inner
    searches (nested evaluation only).
    """

    folds: Tuple[FoldScores, ...]
    metrics: Tuple[str, ...]
    n_fits: int
    inner_fits: int = 0
    searches: Tuple["SearchResult", ...] = ()
    models: Tuple[Estimator, ...] = field(default=(), compare=False, repr=False)

    def scores(self, metric: str, split: str = "test") -> np.ndarray:
        """Per-fold values of a metric."""
        return np.array([getattr(f, split)[metric] for f in self.folds], dtype=float)

    def mean(self, metric: str, split: str = "test") -> float:
        """Mean over folds; folds where the metric is undefined are skipped."""
        values = self.scores(metric, split)
        return float(np.nanmean(values)) if np.isfinite(values).any() else float("nan")

    def std(self, metric: str, split: str = "test") -> float:
        """Population standard deviation over folds."""
        values = self.scores(metric, split)
        return float(np.nanstd(values)) if np.isfinite(values).any() else float("nan")

    def summary(self) -> Dict[str, float]:
        """`{split}_{metric}_{mean|std}` for every metric."""
        out = {}
        for split in ("train", "test"):
            for metric in self.metrics:
                out[f"{split}_{metric}_mean"] = self.mean(metric, split)
                out[f"{split}_{metric}_std"] = self.std(metric, split)
        return out

    def to_frame(self) -> pd.DataFrame:
        """One row per fold followed by `mean` and `std` rows."""
        rows = []
        for f in self.folds:
            row: Dict[str, Any] = {"fold": str(f.fold), "n_train": f.n_train, "n_test": f.n_test}
            for split in ("train", "test"):
                for metric in self.metrics:
                    row[f"{split}_{metric}"] = getattr(f, split)[metric]
            rows.append(row)
        for label, reducer in (("mean", self.mean), ("std", self.std)):
            row = {"fold": label, "n_train": None, "n_test": None}
            for split in ("train", "test"):
                for metric in self.metrics:
                    row[f"{split}_{metric}"] = reducer(metric, split)
            rows.append(row)
        return pd.DataFrame(rows)


@dataclass(frozen=True)
class Trial:
    """One evaluated parameter draw."""

    index: int
    params: Dict[str, Any]
    mean: float
    std: float


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a randomized search."""

    best_params: Dict[str, Any]
    best_score: float
    best_index: int
    objective: str
    trials: Tuple[Trial, ...]
    n_fits: int


def trial_log(result: SearchResult) -> pd.DataFrame:
    """Table of trials: index, drawn parameters, mean and std of the objective."""
    names: List[str] = []
    for trial in result.trials:
        names.extend(n for n in trial.params if n not in names)
    rows = []
    for trial in result.trials:
        row = {"trial": trial.index}
        row.update({name: trial.params.get(name) for name in names})
        row.update({"mean": trial.mean, "std": trial.std})
        rows.append(row)
    return pd.DataFrame(rows, columns=["trial", *names, "mean", "std"])


# END: results


def _score(metric: str, truth: np.ndarray, prediction: np.ndarray, fold: int) -> float:
    try:
        return float(SCORERS[metric](truth, prediction))
    except ZeroVariance:
        logger.warning("fold %d: %s undefined on a constant target", fold, metric)
        return float("nan")


def _targets(matrix: FeatureMatrix, targets) -> np.ndarray:
    return np.asarray(matrix.target if targets is None else targets, dtype=float).reshape(-1)


def cross_validate(
    spec: LearnerSpec,
    matrix: FeatureMatrix,
    targets: Optional[Sequence[float]],
    plan: FoldPlan,
    metrics: Sequence[str],
    params: Optional[Mapping[str, Any]] = None,
    seed: int = 0,
    keep_models: bool = False,
) -> CVResult:
    """Fit on the complement of every fold and score both portions.

    Preprocessing statistics (imputation medians, standardization) are fitted
    inside each estimator on its training rows only.
    """
    y = _targets(matrix, targets)
    folds, models = [], []
    for fold, train, test in plan.splits():
        try:
            estimator = spec.build(params, seed=seed)
            estimator.fit(matrix.take(train), y[train])
            train_pred = estimator.predict(matrix.take(train))
            test_pred = estimator.predict(matrix.take(test))
            scores = {
                "train": {m: _score(m, y[train], train_pred, fold) for m in metrics},
                "test": {m: _score(m, y[test], test_pred, fold) for m in metrics},
            }
        except FoldError:
            raise
        except IncidentToolkitError as e:
            raise FoldError(fold, e) from e
        folds.append(
            FoldScores(
                fold, scores["train"], scores["test"], train.size, test.size, dict(params or {})
            )
        )
        if keep_models:
            models.append(estimator)
    return CVResult(tuple(folds), tuple(metrics), n_fits=plan.k, models=tuple(models))


def _better(objective: str):
    if objective in Config.Tuning.MAXIMIZE:
        return lambda scores: int(np.argmax(np.where(np.isnan(scores), -np.inf, scores)))
    return lambda scores: int(np.argmin(np.where(np.isnan(scores), np.inf, scores)))


def random_search(
    space: SearchSpace,
    n_iter: int,
    spec: LearnerSpec,
    matrix: FeatureMatrix,
    targets: Optional[Sequence[float]],
    inner_k: int,
    objective: str,
    seed: int,
    threads: int = 1,
) -> SearchResult:
    """Evaluate n_iter seeded draws by inner_k-fold cross-validation.

    All draws are taken before any trial runs and results are collected by trial
    index, so the outcome does not depend on threads. Ties go to the earlier
    trial.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    y = _targets(matrix, targets)
    rng = np.random.default_rng(seed)
    draws = [space.draw(rng) for _ in range(n_iter)]
    plan = plan_folds(spec.task, y, inner_k, seed)

    results = Parallel(n_jobs=threads, prefer="threads")(
        delayed(cross_validate)(spec, matrix, y, plan, [objective], draw, seed) for draw in draws
    )
    trials = tuple(
        Trial(i, draw, result.mean(objective), result.std(objective))
        for i, (draw, result) in enumerate(zip(draws, results))
    )
    best = _better(objective)(np.array([t.mean for t in trials]))
    logger.info(
        "%s search: best %s %.4g at trial %d of %d",
        spec.family,
        objective,
        trials[best].mean,
        best,
        n_iter,
    )
    return SearchResult(
        best_params=dict(trials[best].params),
        best_score=trials[best].mean,
        best_index=best,
        objective=objective,
        trials=trials,
        n_fits=sum(r.n_fits for r in results),
    )


def nested_evaluate(
    spec: LearnerSpec,
    matrix: FeatureMatrix,
    targets: Optional[Sequence[float]],
    outer_k: int,
    inner_k: int,
    n_iter: int,
    space: SearchSpace,
    metrics: Sequence[str],
    seed: int,
    objective: Optional[str] = None,
    threads: int = 1,
) -> CVResult:
    """Tune on every outer-training portion, refit, score the outer-test fold."""
    if outer_k < 2:
        raise ClassTooSmall(f"outer_k must be at least 2, got {outer_k}")
    y = _targets(matrix, targets)
    objective = objective or objective_for(spec.task)
    plan = plan_folds(spec.task, y, outer_k, seed)
    folds, searches, models = [], [], []
    for fold, train, test in plan.splits():
        inner = matrix.take(train)
        inner_seed = derive_seed(seed, fold)
        search = random_search(
            space, n_iter, spec, inner, y[train], inner_k, objective, inner_seed, threads
        )
        try:
            estimator = spec.build(search.best_params, seed=seed, threads=threads)
            estimator.fit(inner, y[train])
            train_pred = estimator.predict(inner)
            test_pred = estimator.predict(matrix.take(test))
        except IncidentToolkitError as e:
            raise FoldError(fold, e) from e
        folds.append(
            FoldScores(
                fold,
                {m: _score(m, y[train], train_pred, fold) for m in metrics},
                {m: _score(m, y[test], test_pred, fold) for m in metrics},
                train.size,
                test.size,
                dict(search.best_params),
            )
        )
        searches.append(search)
        models.append(estimator)
        logger.info("outer fold %d/%d done", fold + 1, outer_k)
    inner_fits = sum(s.n_fits for s in searches)
    return CVResult(
        tuple(folds),
        tuple(metrics),
        n_fits=inner_fits + outer_k,
        inner_fits=inner_fits,
        searches=tuple(searches),
        models=tuple(models),
    )


class TuningSettings(BaseModel):
    """How a stage is tuned; n_iter = 0 means fixed parameters, no search."""

    outer_k: Optional[int] = None
    inner_k: int = Config.Tuning.INNER_K
    n_iter: int = Config.Tuning.N_ITER
    seed: int = 0
    threads: int = 1
    space: Optional[Dict[str, Any]] = None

    @validator("outer_k")
    def _outer(cls, value):
        if value is not None and value < 2:
            raise ValueError("outer_k must be at least 2")
        return value

    @validator("inner_k")
    def _inner(cls, value):
        if value < 2:
            raise ValueError("inner_k must be at least 2")
        return value

    @validator("n_iter")
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("must not be negative")
        return value

    @validator("threads")
    def _positive(cls, value):
        if value < 1:
            raise ValueError("threads must be at least 1")
        return value

    def outer_folds(self, task: str) -> int:
        """Outer fold count, defaulting per task."""
        if self.outer_k is not None:
            return self.outer_k
        if task == Config.Families.CLASSIFY:
            return Config.Tuning.CLASSIFY_OUTER_K
        return Config.Tuning.REGRESS_OUTER_K

    def search_space(self, family: str) -> SearchSpace:
        """Configured space, or the family default."""
        if self.space is not None:
            return load_search_space(self.space)
        return default_search_space(family)


def evaluate(
    spec: LearnerSpec,
    matrix: FeatureMatrix,
    targets: Optional[Sequence[float]],
    settings: TuningSettings,
    metrics: Sequence[str],
) -> CVResult:
    """Nested evaluation, or plain cross-validation of the fixed parameters."""
    y = _targets(matrix, targets)
    outer_k = settings.outer_folds(spec.task)
    if settings.n_iter == 0:
        plan = plan_folds(spec.task, y, outer_k, settings.seed)
        return cross_validate(spec, matrix, y, plan, metrics, seed=settings.seed, keep_models=True)
    return nested_evaluate(
        spec,
        matrix,
        y,
        outer_k,
        settings.inner_k,
        settings.n_iter,
        settings.search_space(spec.family),
        metrics,
        settings.seed,
        threads=settings.threads,
    )


def tune(
    spec: LearnerSpec,
    matrix: FeatureMatrix,
    targets: Optional[Sequence[float]],
    settings: TuningSettings,
) -> Optional[SearchResult]:
    """Search on all rows for the parameters of a final model; None when n_iter = 0."""
    if settings.n_iter == 0:
        return None
    return random_search(
        settings.search_space(spec.family),
        settings.n_iter,
        spec,
        matrix,
        targets,
        settings.inner_k,
        objective_for(spec.task),
        settings.seed,
        settings.threads,
    )
