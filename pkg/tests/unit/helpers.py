# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.
"""Shared builders for the unit tests."""

from datetime import datetime
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from records import FlowObservation, IncidentRecord, RoadSection
from synth import GeneratorConfig, SyntheticDataset, generate

# booster settings that keep fits fast on the small datasets
FAST_BOOSTER = {"n_rounds": 20, "max_depth": 3, "learning_rate": 0.3}
SMALL = {
    "n_incidents": 120,
    "n_sections": 12,
    "n_plain_sections": 3,
    "outlier_count": 6,
    "plane_size": 2000.0,
}


def incident(
    id: str = "I1",
    x: float = 0.0,
    y: float = 0.0,
    report_time: datetime = datetime(2019, 3, 4, 8, 7),
    duration: Optional[float] = 30.0,
    **fields,
) -> IncidentRecord:
    """Incident with only the mandatory fields unless more are given."""
    return IncidentRecord(
        id=id, x=x, y=y, report_time=report_time, duration_min=duration, **fields
    )


def full_incident(id: str = "I1", duration: float = 30.0, **overrides) -> IncidentRecord:
    """Incident with every optional attribute present."""
    values = {
        "hour_of_day": 8,
        "peak_hour": True,
        "day_of_week": 1,
        "weekend": False,
        "month": 3,
        "subtype": "Crash",
        "affected_lanes": "1 lane",
        "direction": "N",
        "severity": 3,
        "incident_source": 1,
        "unplanned": True,
        "avg_temperature": 21.5,
        "rainfall": 0.0,
        "public_holiday": False,
        "sector_id": "SEC11",
        "tz_name": "TZ1",
        "section_id": "S0001",
        "section_class": "arterial",
        "street_id": "ST01",
        "intersection_id": "INT001",
        "section_speed": 60.0,
        "section_lanes": 2,
        "section_capacity": 3600.0,
        "distance_from_cbd": 1.2,
    }
    values.update(overrides)
    return incident(id=id, duration=duration, **values)


def section(
    section_id: str, x: float, y: float, has_detectors: bool = True
) -> RoadSection:
    """Section with fixed physical attributes."""
    return RoadSection(section_id, x, y, 60.0, 2, 3600.0, has_detectors)


def flow(section_id: str, stamp: datetime, value: float) -> FlowObservation:
    """One flow observation."""
    return FlowObservation(section_id, stamp, value)


def small_config(seed: int = 0, **overrides) -> GeneratorConfig:
    """Scaled-down generator configuration."""
    values: Dict = {**SMALL, "seed": seed}
    values.update(overrides)
    return GeneratorConfig(**values)


@lru_cache(maxsize=16)
def _cached(seed: int, overrides: tuple) -> SyntheticDataset:
    return generate(small_config(seed, **dict(overrides)))


def small_dataset(seed: int = 0, **overrides) -> SyntheticDataset:
    """Scaled-down synthetic dataset, generated once per argument set."""
    frozen = tuple(
        sorted((k, tuple(sorted(v.items())) if isinstance(v, dict) else v)
               for k, v in overrides.items())
    )
    return _cached(seed, frozen)


def random_grid(rng: np.random.Generator, rows: int, cols: int, missing: float = 0.0):
    """Float grid with a share of MISSING cells."""
    values = rng.normal(size=(rows, cols))
    if missing:
        values[rng.random((rows, cols)) < missing] = np.nan
    return values
