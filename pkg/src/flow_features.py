"""Traffic-flow features around an incident and the feature-set variants built on them.

For a road section, TRF is the flow of the 15-minute bin holding the report time,
TFH the flow of the bin one hour earlier and TFR = TRF / TFH; values near zero
mean congestion was building before the incident.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, validator

from config import Config
from exceptions import EmptyInput, NoDetectorSections
from learners import LearnerSpec
from records import (
    DEFAULT_POLICY,
    MISSING,
    CategoricalEncoder,
    ColumnSpec,
    FeatureMatrix,
    FlowObservation,
    IncidentRecord,
    RoadSection,
    SchemaPolicy,
    encode,
)
from tuning import TuningSettings, evaluate

logger = logging.getLogger(__name__)

TRIPLE = Config.Features.TRIPLE


class FeatureSetSpec(BaseModel):
    """Which variant to build and its neighbourhood parameters."""

    variant: str = Config.Features.FSC
    k_nearest: int = Field(Config.Features.K_NEAREST, ge=1)
    dv: float = Field(Config.Features.DV, gt=0)

    class Config:
        allow_mutation = False

    @validator("variant")
    def _known_variant(cls, value):
        value = value.upper()
        if value not in Config.Features.VARIANTS:
            raise ValueError(f"unknown feature set {value}")
        return value


@dataclass(frozen=True)
class FlowTriple:
    """TRF, TFH and TFR of one section; NaN is MISSING."""

    trf: float = MISSING
    tfh: float = MISSING
    tfr: float = MISSING

    @classmethod
    def from_flows(cls, trf: float, tfh: float) -> "FlowTriple":
        """Triple whose ratio is present only when both flows are and tfh > 0."""
        ratio = MISSING
        if not (np.isnan(trf) or np.isnan(tfh)) and tfh > 0:
            ratio = trf / tfh
        return cls(trf, tfh, ratio)

    def as_tuple(self) -> Tuple[float, float, float]:
        """(trf, tfh, tfr)."""
        return (self.trf, self.tfh, self.tfr)


class FlowStore:
    """Read-only flow lookup by section and bin start."""

    def __init__(self, observations: Iterable[FlowObservation] = ()):
        self._flows: Dict[Tuple[str, datetime], float] = {
            (o.section_id, o.bin_start): float(o.flow) for o in observations
        }

    def __len__(self) -> int:
        return len(self._flows)

    def get(self, section_id: str, bin_start: datetime) -> float:
        """Flow of a bin, MISSING when unobserved."""
        return self._flows.get((section_id, bin_start), MISSING)


def _store(flows) -> FlowStore:
    return flows if isinstance(flows, FlowStore) else FlowStore(flows)


def report_bin(report_time: datetime) -> datetime:
    """Start of the 15-minute bin holding report_time."""
    minute = report_time.minute - report_time.minute % Config.Sections.BIN_MINUTES
    return report_time.replace(minute=minute, second=0, microsecond=0)


def flow_triple(section: RoadSection, report_time: datetime, flows) -> FlowTriple:
    """TRF/TFH/TFR of a section for an incident reported at report_time."""
    store = _store(flows)
    current = report_bin(report_time)
    earlier = current - timedelta(minutes=Config.Sections.HISTORY_MINUTES)
    return FlowTriple.from_flows(
        store.get(section.section_id, current), store.get(section.section_id, earlier)
    )


def detector_sections(sections: Sequence[RoadSection]) -> List[RoadSection]:
    """Detector-equipped sections ordered by section_id."""
    detectors = sorted((s for s in sections if s.has_detectors), key=lambda s: s.section_id)
    if not detectors:
        raise NoDetectorSections("no road section carries detectors")
    return detectors


def _distances(incident: IncidentRecord, detectors: Sequence[RoadSection]) -> np.ndarray:
    points = np.array([(s.x, s.y) for s in detectors], dtype=float)
    return np.hypot(points[:, 0] - incident.x, points[:, 1] - incident.y)


def nearest_sections(
    incident: IncidentRecord, sections: Sequence[RoadSection], k: int
) -> List[Tuple[RoadSection, float]]:
    """The k closest detector sections, nearest first; equal distances by section_id.

    Fewer than k are returned when fewer exist.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    detectors = detector_sections(sections)
    distances = _distances(incident, detectors)
    order = np.argsort(distances, kind="stable")[:k]
    return [(detectors[i], float(distances[i])) for i in order]


def sections_within(
    incident: IncidentRecord, sections: Sequence[RoadSection], dv: float
) -> List[Tuple[RoadSection, float]]:
    """Detector sections at Euclidean distance ≤ dv, nearest first."""
    detectors = detector_sections(sections)
    distances = _distances(incident, detectors)
    order = np.argsort(distances, kind="stable")
    return [(detectors[i], float(distances[i])) for i in order if distances[i] <= dv]


def sum_present(triples: Sequence[FlowTriple]) -> FlowTriple:
    """Component-wise sums skipping MISSING; a sum with nothing present is MISSING."""
    if not triples:
        return FlowTriple()
    grid = np.array([t.as_tuple() for t in triples], dtype=float)
    present = ~np.isnan(grid)
    sums = np.where(present.any(axis=0), np.nansum(grid, axis=0), MISSING)
    return FlowTriple(*(float(v) for v in sums))


def _triple_columns(suffixes: Iterable[str]) -> Tuple[ColumnSpec, ...]:
    return tuple(
        ColumnSpec(f"{name}_{suffix}", Config.Incidents.NUMERIC)
        for suffix in suffixes
        for name in TRIPLE
    )


def _extra_columns(
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    store: FlowStore,
    spec: FeatureSetSpec,
) -> Tuple[Tuple[ColumnSpec, ...], np.ndarray]:
    variant = spec.variant
    detectors = detector_sections(sections)

    if variant == Config.Features.FSA:
        schema = _triple_columns(s.section_id for s in detectors)
        rows = [
            [v for s in detectors for v in flow_triple(s, r.report_time, store).as_tuple()]
            for r in incidents
        ]
        return schema, np.array(rows, dtype=float).reshape(len(incidents), len(schema))

    if variant == Config.Features.FSB:
        schema = _triple_columns(str(i) for i in range(1, spec.k_nearest + 1))
        values = np.full((len(incidents), len(schema)), MISSING)
        for i, record in enumerate(incidents):
            near = nearest_sections(record, detectors, spec.k_nearest)
            for slot, (section, _) in enumerate(near):
                values[i, 3 * slot : 3 * slot + 3] = flow_triple(
                    section, record.report_time, store
                ).as_tuple()
        return schema, values

    schema = tuple(ColumnSpec(f"sum_{name}", Config.Incidents.NUMERIC) for name in TRIPLE)
    values = np.full((len(incidents), 3), MISSING)
    for i, record in enumerate(incidents):
        if variant == Config.Features.FSC:
            near = nearest_sections(record, detectors, spec.k_nearest)
        else:
            near = sections_within(record, detectors, spec.dv)
        triples = [flow_triple(section, record.report_time, store) for section, _ in near]
        values[i] = sum_present(triples).as_tuple()
    return schema, values


def build_features(
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
    spec: FeatureSetSpec,
    encoder: Optional[CategoricalEncoder] = None,
    schema_policy: SchemaPolicy = DEFAULT_POLICY,
) -> FeatureMatrix:
    """Baseline matrix of the incidents, extended with the variant's flow columns.

    Args:
        incidents: records to encode, in row order.
        sections: the road network; only detector sections feed flow columns.
        flows: FlowStore or flow observations.
        spec: variant and neighbourhood parameters.
        encoder: dictionaries of a trained model, for unseen incidents.
        schema_policy: vocabulary seeds when dictionaries are built here.
    """
    if not incidents:
        raise EmptyInput("no incidents to build features for")
    base = encode(incidents, schema_policy, encoder)
    if spec.variant == Config.Features.BFS:
        return base
    schema, values = _extra_columns(incidents, sections, _store(flows), spec)
    logger.info(
        "%s: %d incidents x %d columns (%d flow columns)",
        spec.variant,
        base.n_rows,
        base.n_cols + len(schema),
        len(schema),
    )
    return base.append_columns(schema, values)


def dv_sensitivity(
    incidents: Sequence[IncidentRecord],
    sections: Sequence[RoadSection],
    flows,
    dv_set: Sequence[float],
    learner: LearnerSpec,
    settings: TuningSettings,
) -> pd.DataFrame:
    """Evaluate the radius-aggregated variant for every radius in dv_set.

    Returns:
        One row per radius: dv, test MAPE and R² mean and std over outer folds.
    """
    if not dv_set:
        raise EmptyInput("dv_set is empty")
    store = _store(flows)
    rows = []
    for dv in dv_set:
        matrix = build_features(
            incidents, sections, store, FeatureSetSpec(variant=Config.Features.FSD, dv=dv)
        )
        result = evaluate(learner, matrix, None, settings, Config.Tuning.REGRESS_METRICS)
        rows.append(
            {
                "dv": float(dv),
                "mape_mean": result.mean("mape"),
                "mape_std": result.std("mape"),
                "r2_mean": result.mean("r2"),
                "r2_std": result.std("r2"),
            }
        )
        logger.info("dv=%g: MAPE %.2f", dv, rows[-1]["mape_mean"])
    return pd.DataFrame(rows)
