"""Uniform estimator interface over every learner family."""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import abc
import json
import logging
import warnings
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel, ValidationError, validator

from config import Config
from exceptions import BadParams, CorruptModel, DimensionMismatch, SchemaMismatch
from records import ColumnSpec, FeatureMatrix

logger = logging.getLogger(__name__)

ESTIMATORS: Dict[str, Type["Estimator"]] = {}


def register(family: str) -> Callable[[Type["Estimator"]], Type["Estimator"]]:
    """Class decorator adding an estimator class to the family registry."""

    def wrapper(cls: Type["Estimator"]) -> Type["Estimator"]:
        cls.family = family
        ESTIMATORS[family] = cls
        return cls

    return wrapper


def validated(model: Type[BaseModel], params: Mapping[str, Any]) -> BaseModel:
    """Build a pydantic parameter object, raising BadParams on invalid input."""
    try:
        return model(**params)
    except ValidationError as e:
        raise BadParams(str(e)) from e


# BEGIN: preprocessing
class MedianImputer:
    """Column medians of the rows it was fitted on, substituted for MISSING."""

    def __init__(self, medians: Optional[np.ndarray] = None):
        self.medians = None if medians is None else np.asarray(medians, dtype=float)

    def fit(self, values: np.ndarray) -> "MedianImputer":
        """Record column medians; an all-MISSING column gets 0."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if values.shape[0]:
                medians = np.nanmedian(values, axis=0)
            else:
                medians = np.zeros(values.shape[1])
        self.medians = np.where(np.isnan(medians), 0.0, medians)
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Copy of values with MISSING cells replaced."""
        values = np.array(values, dtype=float)
        if values.shape[1] != self.medians.shape[0]:
            raise DimensionMismatch(f"imputer fitted on {self.medians.shape[0]} columns")
        rows, cols = np.nonzero(np.isnan(values))
        values[rows, cols] = self.medians[cols]
        return values


class Standardizer:
    """Per-column centring and scaling; constant columns keep scale 1."""

    def __init__(self, mean: Optional[np.ndarray] = None, scale: Optional[np.ndarray] = None):
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.scale = None if scale is None else np.asarray(scale, dtype=float)
        # columns constant on the fitted rows
        self.constant = None if self.scale is None else np.zeros(self.scale.shape, dtype=bool)

    def fit(self, values: np.ndarray) -> "Standardizer":
        """Record column means and standard deviations."""
        self.mean = values.mean(axis=0)
        scale = values.std(axis=0)
        self.constant = scale == 0
        self.scale = np.where(self.constant, 1.0, scale)
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Standardized copy of values."""
        return (np.asarray(values, dtype=float) - self.mean) / self.scale


# END: preprocessing


class Estimator(abc.ABC):
    """A learner of one family, for one task, with fixed parameters.

    Subclasses implement _fit, _score and the model-document pair; this class
    handles schema bookkeeping, class thresholding and the document envelope.
    """

    family: str = ""

    def __init__(
        self,
        task: str = Config.Families.REGRESS,
        params: Optional[Mapping[str, Any]] = None,
        loss: Optional[str] = None,
        log_space: bool = False,
        seed: int = 0,
        threads: int = 1,
    ):
        self.task = task
        self.params: Dict[str, Any] = dict(params or {})
        self.loss = loss
        self.log_space = log_space
        self.seed = int(seed)
        self.threads = threads
        self.schema: Tuple[ColumnSpec, ...] = ()
        self.dictionaries: Dict[str, Any] = {}
        self.fitted = False

    @property
    def classifies(self) -> bool:
        """Whether the estimator predicts the short/long label."""
        return self.task == Config.Families.CLASSIFY

    def fit(self, matrix, targets=None) -> "Estimator":
        """Fit on a FeatureMatrix (or float grid) and a target vector.

        targets defaults to the matrix's own target.
        """
        values = self._values(matrix, check=False)
        if targets is None:
            if not isinstance(matrix, FeatureMatrix):
                raise DimensionMismatch("targets are required for a bare grid")
            targets = matrix.target
        y = np.asarray(targets, dtype=float).reshape(-1)
        if y.shape[0] != values.shape[0]:
            raise DimensionMismatch(f"{y.shape[0]} targets for {values.shape[0]} rows")
        if isinstance(matrix, FeatureMatrix):
            self.schema = tuple(matrix.schema)
            self.dictionaries = matrix.encoder.to_document() if matrix.encoder else {}
        else:
            self.schema = tuple(
                ColumnSpec(f"f{j}", Config.Incidents.NUMERIC) for j in range(values.shape[1])
            )
        logger.debug(
            "fitting %s %s on %d rows x %d columns", self.family, self.task, *values.shape
        )
        self._fit(values, y)
        self.fitted = True
        return self

    def predict_score(self, matrix) -> np.ndarray:
        """Probability of the short class, or the duration in minutes."""
        return self._score(self._values(matrix))

    def predict(self, matrix) -> np.ndarray:
        """Labels {0, 1} when classifying, minutes when regressing."""
        score = self.predict_score(matrix)
        if self.classifies:
            # a 0.5 vote share or probability goes to the short class
            return (score >= 0.5).astype(int)
        return score

    def _values(self, matrix, check: bool = True) -> np.ndarray:
        if isinstance(matrix, FeatureMatrix):
            values = matrix.values
            if check and tuple(matrix.schema) != self.schema:
                theirs = set(matrix.names)
                lost = [c.name for c in self.schema if c.name not in theirs]
                column = lost[0] if lost else None
                raise SchemaMismatch(
                    "matrix columns differ from the training schema"
                    + (f" (missing {column})" if column else ""),
                    column,
                )
            return values
        values = np.atleast_2d(np.asarray(matrix, dtype=float))
        if check and values.shape[1] != len(self.schema):
            raise SchemaMismatch(f"expected {len(self.schema)} columns, got {values.shape[1]}")
        return values

    @abc.abstractmethod
    def _fit(self, values: np.ndarray, targets: np.ndarray) -> None:
        """Fit the family's model on a float grid."""

    @abc.abstractmethod
    def _score(self, values: np.ndarray) -> np.ndarray:
        """Class-1 probability or duration for every row."""

    @abc.abstractmethod
    def _model_document(self) -> Dict[str, Any]:
        """Plain-data form of the fitted model."""

    @abc.abstractmethod
    def _load_model(self, document: Dict[str, Any]) -> None:
        """Inverse of _model_document."""

    def to_document(self) -> Dict[str, Any]:
        """Self-describing document: envelope, schema, dictionaries and model."""
        return {
            "format": Config.DOCUMENT_FORMAT,
            "version": Config.DOCUMENT_VERSION,
            "family": self.family,
            "task": self.task,
            "loss": self.loss,
            "log_space": self.log_space,
            "seed": self.seed,
            "params": self.params,
            "schema": [[c.name, c.kind] for c in self.schema],
            "dictionaries": self.dictionaries,
            "model": self._model_document(),
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "Estimator":
        """Rebuild a fitted estimator from to_document output."""
        estimator = cls(
            task=document["task"],
            params=document["params"],
            loss=document["loss"],
            log_space=bool(document["log_space"]),
            seed=int(document["seed"]),
        )
        estimator.schema = tuple(ColumnSpec(name, kind) for name, kind in document["schema"])
        estimator.dictionaries = dict(document["dictionaries"])
        estimator._load_model(document["model"])
        estimator.fitted = True
        return estimator


def dumps(estimator: Estimator) -> str:
    """JSON text of a fitted estimator."""
    return json.dumps(estimator.to_document(), indent=1)


def loads(text: str) -> Estimator:
    """Inverse of dumps; any malformed document raises CorruptModel."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptModel(f"model document is not valid JSON: {e}") from e
    if not isinstance(document, dict) or document.get("format") != Config.DOCUMENT_FORMAT:
        raise CorruptModel("not an incident-duration model document")
    if document.get("version") != Config.DOCUMENT_VERSION:
        raise CorruptModel(f"unsupported document version {document.get('version')}")
    family = document.get("family")
    if family not in ESTIMATORS:
        raise CorruptModel(f"unknown model family {family!r}")
    try:
        return ESTIMATORS[family].from_document(document)
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as e:
        raise CorruptModel(f"invalid {family} document: {e}") from e


class LearnerSpec(BaseModel):
    """What to train: family, task, loss, target space and fixed parameters."""

    family: str = Config.Families.BOOSTER
    task: str = Config.Families.REGRESS
    loss: Optional[str] = None
    log_space: bool = False
    params: Dict[str, Any] = {}

    class Config:
        allow_mutation = False

    @validator("family")
    def _known_family(cls, value):
        if value not in Config.Families.ALL:
            raise ValueError(f"unknown family {value}")
        return value

    @validator("task")
    def _known_task(cls, value):
        if value not in (Config.Families.CLASSIFY, Config.Families.REGRESS):
            raise ValueError(f"unknown task {value}")
        return value

    @validator("loss")
    def _known_loss(cls, value):
        if value is not None and value not in Config.Booster.LOSSES:
            raise ValueError(f"unknown loss {value}")
        return value

    def build(
        self, params: Optional[Mapping[str, Any]] = None, seed: int = 0, threads: int = 1
    ) -> Estimator:
        """Unfitted estimator with the fixed parameters overlaid by params."""
        merged = {**self.params, **(params or {})}
        return ESTIMATORS[self.family](
            task=self.task,
            params=merged,
            loss=self.loss,
            log_space=self.log_space,
            seed=seed,
            threads=threads,
        )
