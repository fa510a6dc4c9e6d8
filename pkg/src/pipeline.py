"""Bi-level incident duration prediction.

Step 1 classifies an incident as short (duration at most the threshold) or long
from the baseline features. Step 2 estimates the duration of short incidents
from the configured flow-feature set. Long incidents are flagged for Step 3,
which needs features this toolkit does not build.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, Field

from config import Config
from exceptions import CorruptModel, EmptyEvaluation, EmptyInput, NoShortIncidents, ZeroVariance
from flow_features import FeatureSetSpec, FlowStore, build_features
from learners import Estimator, LearnerSpec, dumps, loads
from metrics import ClassificationScores, classification_scores, confusion, mape, r2
from records import (
    DEFAULT_POLICY,
    CategoricalEncoder,
    IncidentRecord,
    PathLike,
    RoadSection,
    encode,
    filter_outliers,
)
from tuning import SearchResult, TuningSettings, evaluate, tune

logger = logging.getLogger(__name__)


def label(duration: float, threshold: float = Config.Pipeline.THRESHOLD) -> int:
    """1 (short) when duration <= threshold, else 0."""
    return int(duration <= threshold)


def labels(
    durations: Sequence[float], threshold: float = Config.Pipeline.THRESHOLD
) -> np.ndarray:
    """Vectorized label()."""
    return (np.asarray(durations, dtype=float) <= threshold).astype(int)


class PipelineConfig(BaseModel):
    """Both stages of the framework; fixed parameters unless tuning.n_iter > 0."""

    threshold: float = Field(Config.Pipeline.THRESHOLD, gt=0)
    classifier: LearnerSpec = LearnerSpec(task=Config.Families.CLASSIFY)
    regressor: LearnerSpec = LearnerSpec(task=Config.Families.REGRESS, loss=Config.Booster.MAPE)
    features: FeatureSetSpec = FeatureSetSpec()
    tuning: TuningSettings = TuningSettings(n_iter=0)
    min_duration: float = Config.Incidents.MIN_DURATION
    seed: int = 0


@dataclass(frozen=True)
class BiLevelModel:
    """A fitted classifier and regressor sharing one set of categorical dictionaries."""

    classifier: Estimator
    regressor: Estimator
    threshold: float
    features: FeatureSetSpec
    encoder: CategoricalEncoder
    degenerate: bool = False
    searches: Dict[str, SearchResult] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class BiLevelOutcome:
    """Routing of one incident; a duration is present exactly for short incidents."""

    id: str
    predicted_class: str
    duration: Optional[float] = None
    flag: str = ""

    def __post_init__(self):
        if (self.duration is not None) != (self.predicted_class == Config.Pipeline.SHORT):
            raise ValueError("a duration estimate is given for short incidents only")

    def as_row(self) -> Dict[str, Any]:
        """id, class, duration (empty when long) and the Step 3 flag."""
        return {
            "id": self.id,
            "class": self.predicted_class,
            "duration": self.duration,
            "step3_flag": self.flag,
        }


def _durations(records: Sequence[IncidentRecord]) -> np.ndarray:
    return np.array([r.duration_min for r in records], dtype=float)


def _fit_stage(
    spec: LearnerSpec, matrix, targets: np.ndarray, settings: TuningSettings, seed: int, name: str
) -> Tuple[Estimator, Optional[SearchResult]]:
    search = None
    if settings.n_iter > 0:
        search = tune(spec, matrix, targets, settings)
    params = search.best_params if search else None
    estimator = spec.build(params, seed=seed, threads=settings.threads).fit(matrix, targets)
    logger.info("%s stage: %s fitted on %d rows", name, spec.family, matrix.n_rows)
    return estimator, search


def fit_bilevel(
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
    config: PipelineConfig = PipelineConfig(),
) -> BiLevelModel:
    """Fit the classifier on baseline features and the regressor on the truly short rows.

    Rows shorter than config.min_duration are dropped first. A training set with
    a single class gets a constant classifier and is flagged degenerate.
    """
    records = filter_outliers(incidents, config.min_duration)
    if not records:
        raise EmptyInput("no incidents left after outlier filtering")
    y = _durations(records)
    short = labels(y, config.threshold)

    baseline = encode(records, DEFAULT_POLICY)
    encoder = baseline.encoder
    degenerate = short.min() == short.max()
    searches: Dict[str, SearchResult] = {}
    if degenerate:
        logger.warning(
            "all %d training incidents are %s; classifier is constant",
            len(records),
            Config.Pipeline.SHORT if short[0] else Config.Pipeline.LONG,
        )
        constant = LearnerSpec(family=Config.Families.MEAN, task=Config.Families.CLASSIFY)
        classifier = constant.build(seed=config.seed).fit(baseline, short)
    else:
        classifier, search = _fit_stage(
            config.classifier, baseline, short, config.tuning, config.seed, "classifier"
        )
        if search:
            searches["classifier"] = search

    rows = np.flatnonzero(short == 1)
    if rows.size == 0:
        raise NoShortIncidents(f"no training incident lasts at most {config.threshold} minutes")
    short_records = [records[i] for i in rows]
    features = build_features(short_records, sections, flows, config.features, encoder=encoder)
    regressor, search = _fit_stage(
        config.regressor, features, y[rows], config.tuning, config.seed, "regressor"
    )
    if search:
        searches["regressor"] = search
    return BiLevelModel(
        classifier=classifier,
        regressor=regressor,
        threshold=config.threshold,
        features=config.features,
        encoder=encoder,
        degenerate=bool(degenerate),
        searches=searches,
    )


def predict_many(
    model: BiLevelModel,
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
) -> List[BiLevelOutcome]:
    """Route every incident; regressor features are built for short-classified rows only."""
    if not incidents:
        return []
    baseline = encode(incidents, encoder=model.encoder)
    classes = model.classifier.predict(baseline)
    rows = np.flatnonzero(classes == 1)
    estimates: Dict[int, float] = {}
    if rows.size:
        short_records = [incidents[i] for i in rows]
        features = build_features(
            short_records, sections, flows, model.features, encoder=model.encoder
        )
        estimates = dict(zip(rows.tolist(), model.regressor.predict(features).tolist()))
    outcomes = []
    for i, record in enumerate(incidents):
        if i in estimates:
            outcomes.append(BiLevelOutcome(record.id, Config.Pipeline.SHORT, estimates[i]))
        else:
            outcomes.append(
                BiLevelOutcome(record.id, Config.Pipeline.LONG, flag=Config.Pipeline.STEP3_FLAG)
            )
    return outcomes


def predict_bilevel(
    model: BiLevelModel, incident: IncidentRecord, sections: Sequence[RoadSection], flows
) -> BiLevelOutcome:
    """Route one incident."""
    return predict_many(model, [incident], sections, flows)[0]


def outcomes_frame(outcomes: Sequence[BiLevelOutcome]) -> pd.DataFrame:
    """Predictions file layout."""
    return pd.DataFrame(
        [o.as_row() for o in outcomes], columns=["id", "class", "duration", "step3_flag"]
    )


@dataclass(frozen=True)
class BiLevelReport:
    """Held-out evaluation of a bi-level model.

    Routing cells are named truth_prediction. Conditioned regression scores use
    the truly short rows routed short; unconditioned ones all truly short rows.
    """

    classification: ClassificationScores
    cells: Dict[str, int]
    mape: Optional[float]
    r2: Optional[float]
    unconditioned_mape: Optional[float]
    unconditioned_r2: Optional[float]
    n_regressed: int
    note: str = ""

    def as_dict(self) -> Dict[str, Any]:
        """Flat metric name to value mapping."""
        out: Dict[str, Any] = dict(self.classification.as_dict())
        out.update(self.cells)
        out.update(
            {
                "mape": self.mape,
                "r2": self.r2,
                "unconditioned_mape": self.unconditioned_mape,
                "unconditioned_r2": self.unconditioned_r2,
                "n_regressed": self.n_regressed,
                "note": self.note,
            }
        )
        return out


def _regression(truth: np.ndarray, prediction: np.ndarray) -> Tuple[float, Optional[float]]:
    try:
        fit = r2(truth, prediction)
    except (EmptyEvaluation, ZeroVariance):
        fit = None
    return mape(truth, prediction), fit


def evaluate_bilevel(
    model: BiLevelModel,
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
) -> BiLevelReport:
    """Classification scores on every row and regression scores on the short population."""
    if not incidents:
        raise EmptyEvaluation("no held-out incidents")
    y = _durations(incidents)
    truth = labels(y, model.threshold)
    outcomes = predict_many(model, incidents, sections, flows)
    routed = np.array([o.predicted_class == Config.Pipeline.SHORT for o in outcomes])
    scores = classification_scores(confusion(truth, routed.astype(int)))
    cells = {
        "short_short": int(np.sum((truth == 1) & routed)),
        "short_long": int(np.sum((truth == 1) & ~routed)),
        "long_short": int(np.sum((truth == 0) & routed)),
        "long_long": int(np.sum((truth == 0) & ~routed)),
    }

    conditioned = np.flatnonzero((truth == 1) & routed)
    note = ""
    mape_c = r2_c = None
    if conditioned.size:
        estimates = np.array([outcomes[i].duration for i in conditioned])
        mape_c, r2_c = _regression(y[conditioned], estimates)
    else:
        note = "no truly short incident was routed short"
        logger.warning("regression metrics empty: %s", note)

    mape_u = r2_u = None
    every_short = np.flatnonzero(truth == 1)
    if every_short.size:
        records = [incidents[i] for i in every_short]
        features = build_features(records, sections, flows, model.features, encoder=model.encoder)
        mape_u, r2_u = _regression(y[every_short], model.regressor.predict(features))
    return BiLevelReport(
        classification=scores,
        cells=cells,
        mape=mape_c,
        r2=r2_c,
        unconditioned_mape=mape_u,
        unconditioned_r2=r2_u,
        n_regressed=int(conditioned.size),
        note=note,
    )


# BEGIN: model comparisons
def _summary_row(result, metrics: Sequence[str], **keys) -> Dict[str, Any]:
    row = dict(keys)
    for split in ("train", "test"):
        for metric in metrics:
            row[f"{split}_{metric}_mean"] = result.mean(metric, split)
            row[f"{split}_{metric}_std"] = result.std(metric, split)
    return row


def compare_classifiers(
    records: Sequence[IncidentRecord],
    families: Sequence[str] = Config.Families.ALL,
    settings: TuningSettings = TuningSettings(n_iter=0),
    threshold: float = Config.Pipeline.THRESHOLD,
) -> pd.DataFrame:
    """Train and test accuracy, precision, recall and F1 of every family on baseline features."""
    matrix = encode(records)
    y = labels(matrix.target, threshold)
    metrics = Config.Tuning.CLASSIFY_METRICS
    rows = []
    for family in families:
        spec = LearnerSpec(family=family, task=Config.Families.CLASSIFY)
        result = evaluate(spec, matrix, y, settings, metrics)
        rows.append(_summary_row(result, metrics, family=family))
        logger.info("%s classifier: test F1 %.3f", family, rows[-1]["test_f1_mean"])
    return pd.DataFrame(rows)


def _short_only(records: Sequence[IncidentRecord], threshold: float) -> List[IncidentRecord]:
    kept = [r for r in records if label(r.duration_min, threshold)]
    if not kept:
        raise NoShortIncidents(f"no incident lasts at most {threshold} minutes")
    return kept


def compare_regressors(
    records: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
    families: Sequence[str] = Config.Families.ALL,
    losses: Sequence[str] = Config.Booster.REGRESSION_LOSSES,
    features: FeatureSetSpec = FeatureSetSpec(variant=Config.Features.BFS),
    settings: TuningSettings = TuningSettings(n_iter=0),
    log_space: bool = False,
    short_only: bool = False,
    threshold: float = Config.Pipeline.THRESHOLD,
) -> pd.DataFrame:
    """Test MAPE and R² of every family, and of every training loss for boosted families."""
    if short_only:
        records = _short_only(records, threshold)
    matrix = build_features(records, sections, flows, features)
    metrics = Config.Tuning.REGRESS_METRICS
    rows = []
    for family in families:
        boosted = family in (Config.Families.BOOSTER, Config.Families.GBDT)
        for loss in losses if boosted else [None]:
            spec = LearnerSpec(
                family=family, task=Config.Families.REGRESS, loss=loss, log_space=log_space
            )
            result = evaluate(spec, matrix, None, settings, metrics)
            rows.append(_summary_row(result, metrics, family=family, loss=loss or ""))
    return pd.DataFrame(rows)


def compare_feature_sets(
    records: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
    variants: Sequence[str] = Config.Features.VARIANTS,
    learner: LearnerSpec = LearnerSpec(loss=Config.Booster.MAPE),
    settings: TuningSettings = TuningSettings(n_iter=0),
    k_nearest: int = Config.Features.K_NEAREST,
    dv: float = Config.Features.DV,
    short_only: bool = False,
    threshold: float = Config.Pipeline.THRESHOLD,
) -> pd.DataFrame:
    """One row per feature set: column count and test MAPE and R² mean and std."""
    if short_only:
        records = _short_only(records, threshold)
    store = flows if isinstance(flows, FlowStore) else FlowStore(flows)
    metrics = Config.Tuning.REGRESS_METRICS
    rows = []
    for variant in variants:
        spec = FeatureSetSpec(variant=variant, k_nearest=k_nearest, dv=dv)
        matrix = build_features(records, sections, store, spec)
        result = evaluate(learner, matrix, None, settings, metrics)
        row = {"feature_set": spec.variant, "n_columns": matrix.n_cols}
        row.update(
            {
                f"test_{metric}_{stat}": getattr(result, stat)(metric)
                for metric in metrics
                for stat in ("mean", "std")
            }
        )
        rows.append(row)
        logger.info("%s: test MAPE %.2f", spec.variant, row["test_mape_mean"])
    return pd.DataFrame(rows)


# END: model comparisons


# BEGIN: bundles
def save_bundle(
    model: BiLevelModel, directory: PathLike, run: Optional[Mapping[str, Any]] = None
) -> Path:
    """Write classifier and regressor documents and a YAML manifest into directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / Config.Pipeline.CLASSIFIER_DOCUMENT).write_text(dumps(model.classifier))
    (directory / Config.Pipeline.REGRESSOR_DOCUMENT).write_text(dumps(model.regressor))
    manifest = {
        "format": Config.DOCUMENT_FORMAT,
        "version": Config.DOCUMENT_VERSION,
        "threshold": model.threshold,
        "features": model.features.dict(),
        "degenerate": model.degenerate,
        "run": dict(run or {}),
    }
    path = directory / Config.Pipeline.MANIFEST
    path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    logger.info("wrote model bundle to %s", directory)
    return path


def load_manifest(directory: PathLike) -> Dict[str, Any]:
    """Parsed manifest of a bundle."""
    try:
        manifest = yaml.safe_load((Path(directory) / Config.Pipeline.MANIFEST).read_text())
    except yaml.YAMLError as e:
        raise CorruptModel(f"unreadable bundle manifest: {e}") from e
    if not isinstance(manifest, dict) or manifest.get("format") != Config.DOCUMENT_FORMAT:
        raise CorruptModel(f"{directory} holds no model bundle manifest")
    return manifest


def load_bundle(directory: PathLike) -> BiLevelModel:
    """Inverse of save_bundle."""
    directory = Path(directory)
    manifest = load_manifest(directory)
    classifier = loads((directory / Config.Pipeline.CLASSIFIER_DOCUMENT).read_text())
    regressor = loads((directory / Config.Pipeline.REGRESSOR_DOCUMENT).read_text())
    try:
        features = FeatureSetSpec(**manifest["features"])
        threshold = float(manifest["threshold"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModel(f"invalid bundle manifest: {e}") from e
    return BiLevelModel(
        classifier=classifier,
        regressor=regressor,
        threshold=threshold,
        features=features,
        encoder=CategoricalEncoder(classifier.dictionaries),
        degenerate=bool(manifest.get("degenerate", False)),
    )


# END: bundles
