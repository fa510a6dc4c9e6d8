"""Seeded synthetic incidents, road sections and detector flows with a known duration law.

Durations follow a log-linear law in a few planted features plus a congestion term
and lognormal noise, are rescaled to a target mean, get a long tail of 100-719
minute incidents and exactly `outlier_count` sub-5-minute rows. Congestion is
planted by lowering TFR on every detector section within `congestion_radius` of
the incident.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from config import Config
from exceptions import InfeasibleConfig, IoFailure
from flow_features import report_bin
from records import (
    FlowObservation,
    IncidentRecord,
    PathLike,
    RoadSection,
    write_flows,
    write_incidents,
    write_sections,
)

logger = logging.getLogger(__name__)

FLOW_RATIO = "flow_ratio"
START = datetime(2019, 1, 1)
DAYS = 365
BINS_PER_DAY = 24 * 60 // Config.Sections.BIN_MINUTES
HISTORY_BINS = Config.Sections.HISTORY_MINUTES // Config.Sections.BIN_MINUTES

# ordinal impact of each affected_lanes category
LANE_SCORES = {
    "Null": 0.0,
    "breakdown": 0.5,
    "1 lane": 1.0,
    "2 lanes": 2.0,
    "3 lanes": 3.0,
    "4 lanes": 4.0,
    "All lanes": 5.0,
}
LANE_WEIGHTS = {
    "Null": 0.10,
    "1 lane": 0.35,
    "2 lanes": 0.20,
    "3 lanes": 0.10,
    "4 lanes": 0.05,
    "All lanes": 0.05,
    "breakdown": 0.15,
}
SUBTYPES = ["Crash", "Breakdown", "Hazard", "Bus", "Truck"]
DIRECTIONS = ["N", "S", "E", "W"]
SECTION_CLASSES = ["motorway", "arterial", "collector", "local"]
SPEEDS = [40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]
PEAK_HOURS = {7, 8, 16, 17, 18}
# relative incident frequency and traffic volume per hour of day
DIURNAL = np.array(
    [0.25, 0.2, 0.15, 0.15, 0.2, 0.4, 0.8, 1.3, 1.5, 1.1, 0.9, 0.9,
     1.0, 1.0, 1.0, 1.1, 1.4, 1.6, 1.4, 1.0, 0.8, 0.6, 0.45, 0.3]
)  # fmt: skip

DEFAULT_EFFECTS = {
    "affected_lanes": 0.5,
    "hour_of_day": 0.35,
    "section_speed": 0.25,
    "distance_from_cbd": 0.05,
    FLOW_RATIO: -0.6,
}


class GeneratorConfig(BaseModel):
    """Generator settings; effects are log-duration slopes per standard deviation."""

    n_incidents: int = Config.Synth.N_INCIDENTS
    n_sections: int = Config.Synth.N_SECTIONS
    n_plain_sections: int = Config.Synth.N_PLAIN_SECTIONS
    seed: int = 0
    effects: Dict[str, float] = DEFAULT_EFFECTS
    noise_sigma: float = 0.35
    outlier_count: int = Config.Synth.OUTLIER_COUNT
    long_tail_share: float = 0.03
    target_mean: float = Config.Synth.TARGET_MEAN
    max_duration: float = Config.Synth.MAX_DURATION
    plane_size: float = Config.Synth.PLANE_SIZE
    congestion_radius: float = Config.Features.DV
    missing_flow_rate: float = 0.02
    missing_weather_rate: float = 0.05
    flat_flows: bool = False


@dataclass(frozen=True)
class GroundTruth:
    """Noiseless durations, per-feature log-duration contributions and the planted ranking."""

    ids: Tuple[str, ...]
    noiseless: np.ndarray
    contributions: Dict[str, np.ndarray]
    ranking: Tuple[str, ...]

    def to_frame(self) -> pd.DataFrame:
        """ground_truth.csv layout."""
        frame = pd.DataFrame({"id": list(self.ids), "noiseless_duration": self.noiseless})
        for name, values in self.contributions.items():
            frame[f"contribution_{name}"] = values
        return frame


@dataclass(frozen=True)
class SyntheticDataset:
    """Everything generate() produces."""

    incidents: List[IncidentRecord]
    sections: List[RoadSection]
    flows: List[FlowObservation]
    ground_truth: GroundTruth


def _check(config: GeneratorConfig) -> None:
    if config.n_incidents < 1:
        raise InfeasibleConfig("n_incidents must be positive")
    if config.n_sections < 1 or config.n_plain_sections < 0:
        raise InfeasibleConfig("at least one detector section is needed")
    if not 0 <= config.outlier_count <= config.n_incidents:
        raise InfeasibleConfig(
            f"outlier_count {config.outlier_count} with {config.n_incidents} incidents"
        )
    if not 0 <= config.long_tail_share < 1:
        raise InfeasibleConfig("long_tail_share must lie in [0, 1)")
    n_long = int(round(config.long_tail_share * config.n_incidents))
    if config.outlier_count + n_long > config.n_incidents:
        raise InfeasibleConfig("outliers and long-tail rows exceed the incident count")
    if config.n_incidents > DAYS * BINS_PER_DAY // (2 * HISTORY_BINS):
        raise InfeasibleConfig("too many incidents for distinct report bins")
    if config.noise_sigma < 0 or config.max_duration <= Config.Incidents.MIN_DURATION:
        raise InfeasibleConfig("noise_sigma must be >= 0 and max_duration above 5 minutes")
    allowed = set(Config.baseline_names()) | {FLOW_RATIO}
    unknown = sorted(set(config.effects) - allowed)
    if unknown:
        raise InfeasibleConfig(f"unknown effect feature {unknown[0]}")


def _standardize(values: np.ndarray) -> np.ndarray:
    values = np.where(np.isnan(values), np.nanmean(values), values)
    std = values.std()
    return np.zeros_like(values) if std == 0 else (values - values.mean()) / std


def _place_sections(config: GeneratorConfig, rng: np.random.Generator) -> List[RoadSection]:
    total = config.n_sections + config.n_plain_sections
    half = config.plane_size / 2
    points = rng.uniform(-half, half, size=(total, 2))
    detector = np.zeros(total, dtype=bool)
    detector[rng.choice(total, size=config.n_sections, replace=False)] = True
    speeds = rng.choice(SPEEDS, size=total)
    lanes = rng.integers(1, 5, size=total)
    capacity = lanes * 1800.0 * rng.uniform(0.9, 1.1, size=total)
    return [
        RoadSection(
            section_id=f"S{i + 1:04d}",
            x=round(float(points[i, 0]), 2),
            y=round(float(points[i, 1]), 2),
            speed_limit=float(speeds[i]),
            lanes=int(lanes[i]),
            capacity=round(float(capacity[i]), 1),
            has_detectors=bool(detector[i]),
        )
        for i in range(total)
    ]


def _report_bins(n: int, rng: np.random.Generator) -> List[int]:
    """Distinct report bins whose one-hour-earlier bins collide with no other used bin."""
    hours_p = DIURNAL / DIURNAL.sum()
    used, bins = set(), []
    while len(bins) < n:
        day = int(rng.integers(0, DAYS))
        hour = int(rng.choice(24, p=hours_p))
        quarter = int(rng.integers(0, 4))
        b = day * BINS_PER_DAY + hour * 4 + quarter
        if b < HISTORY_BINS or b in used or b - HISTORY_BINS in used:
            continue
        used.update((b, b - HISTORY_BINS))
        bins.append(b)
    return bins


def _maybe(value, rng: np.random.Generator, rate: float):
    return None if rng.random() < rate else value


def _draw_incidents(
    config: GeneratorConfig, sections: Sequence[RoadSection], rng: np.random.Generator
) -> List[Dict]:
    bins = _report_bins(config.n_incidents, rng)
    lanes_names = list(LANE_WEIGHTS)
    lanes_p = np.array([LANE_WEIGHTS[n] for n in lanes_names])
    section_class = {s.section_id: SECTION_CLASSES[i % 4] for i, s in enumerate(sections)}
    rows = []
    for i, b in enumerate(bins):
        host = sections[int(rng.integers(0, len(sections)))]
        x = host.x + float(rng.normal(0, 30.0))
        y = host.y + float(rng.normal(0, 30.0))
        width = Config.Sections.BIN_MINUTES
        offset = b * width + int(rng.integers(0, width))
        report = START + timedelta(minutes=offset)
        rainy = rng.random() < 0.3
        rows.append(
            {
                "id": f"INC{i + 1:04d}",
                "x": round(x, 2),
                "y": round(y, 2),
                "report_time": report,
                "hour_of_day": report.hour,
                "peak_hour": report.hour in PEAK_HOURS,
                "day_of_week": report.isoweekday(),
                "weekend": report.isoweekday() >= 6,
                "month": report.month,
                "subtype": str(rng.choice(SUBTYPES)),
                "affected_lanes": str(rng.choice(lanes_names, p=lanes_p / lanes_p.sum())),
                "direction": str(rng.choice(DIRECTIONS)),
                "severity": int(rng.integers(1, 11)),
                "incident_source": int(rng.integers(1, 4)),
                "unplanned": bool(rng.random() < 0.9),
                "avg_temperature": _maybe(
                    round(float(rng.normal(20.0, 5.0)), 1), rng, config.missing_weather_rate
                ),
                "rainfall": _maybe(
                    round(float(rng.exponential(4.0)), 1) if rainy else 0.0,
                    rng,
                    config.missing_weather_rate,
                ),
                "public_holiday": bool(rng.random() < 0.03),
                "sector_id": f"SEC{int((x + config.plane_size) // 1000)}"
                f"{int((y + config.plane_size) // 1000)}",
                "tz_name": f"TZ{int(rng.integers(1, 9))}",
                "section_id": host.section_id,
                "section_class": section_class[host.section_id],
                "street_id": f"ST{int(host.section_id[1:]) % 60 + 1:02d}",
                "intersection_id": f"INT{int(rng.integers(1, 200)):03d}",
                "section_speed": host.speed_limit,
                "section_lanes": host.lanes,
                "section_capacity": host.capacity,
                "distance_from_cbd": round(
                    float(np.hypot(x - Config.Synth.CBD[0], y - Config.Synth.CBD[1])) / 1000, 3
                ),
            }
        )
    return rows


def _draw_flows(
    config: GeneratorConfig,
    incidents: Sequence[Dict],
    sections: Sequence[RoadSection],
    rng: np.random.Generator,
) -> Tuple[List[FlowObservation], np.ndarray]:
    """Flows of every detector section at each incident's report bin and one hour earlier.

    Returns the observations and, per incident, the sum of TFR over the
    detector sections within the congestion radius.
    """
    detectors = [s for s in sections if s.has_detectors]
    points = np.array([(s.x, s.y) for s in detectors])
    base = np.array([s.capacity for s in detectors]) / 12.0
    observations: List[FlowObservation] = []
    signal = np.zeros(len(incidents))
    for i, incident in enumerate(incidents):
        current = report_bin(incident["report_time"])
        earlier = current - timedelta(minutes=Config.Sections.HISTORY_MINUTES)
        distance = np.hypot(points[:, 0] - incident["x"], points[:, 1] - incident["y"])
        near = distance <= config.congestion_radius
        if config.flat_flows:
            tfh = np.full(len(detectors), 100.0)
            trf = tfh.copy()
            keep = np.ones((2, len(detectors)), dtype=bool)
        else:
            congestion = rng.uniform(0.2, 1.0)
            tfh = base * DIURNAL[earlier.hour] * rng.lognormal(0.0, 0.1, size=len(detectors))
            free = DIURNAL[current.hour] / DIURNAL[earlier.hour]
            ratio = np.where(
                near,
                congestion * (1 + rng.normal(0, 0.02, size=len(detectors))),
                free * (1 + rng.normal(0, 0.05, size=len(detectors))),
            )
            tfh = np.round(np.maximum(tfh, 1.0), 1)
            trf = np.round(np.maximum(tfh * ratio, 0.0), 1)
            keep = rng.random((2, len(detectors))) >= config.missing_flow_rate
        signal[i] = float(np.sum(trf[near] / tfh[near]))
        for j, section in enumerate(detectors):
            if keep[0, j]:
                observations.append(FlowObservation(section.section_id, current, float(trf[j])))
            if keep[1, j]:
                observations.append(FlowObservation(section.section_id, earlier, float(tfh[j])))
    return observations, signal


def _feature_scores(incidents: Sequence[Dict], name: str, flow_signal: np.ndarray) -> np.ndarray:
    if name == FLOW_RATIO:
        return _standardize(flow_signal)
    if name == "affected_lanes":
        raw = [LANE_SCORES[r["affected_lanes"]] for r in incidents]
    else:
        raw = [np.nan if r[name] is None else float(r[name]) for r in incidents]
    return _standardize(np.array(raw, dtype=float))


def generate(config: GeneratorConfig) -> SyntheticDataset:
    """Draw a dataset; identical configs give identical datasets."""
    _check(config)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(4)]
    sections = _place_sections(config, streams[0])
    rows = _draw_incidents(config, sections, streams[1])
    flows, flow_signal = _draw_flows(config, rows, sections, streams[2])
    rng = streams[3]

    n = len(rows)
    effects = dict(config.effects)
    if config.flat_flows:
        effects.pop(FLOW_RATIO, None)
    contributions = {
        name: beta * _feature_scores(rows, name, flow_signal) for name, beta in effects.items()
    }
    linear = np.sum(list(contributions.values()), axis=0) if contributions else np.zeros(n)
    noise = rng.normal(0.0, config.noise_sigma, size=n) if config.noise_sigma > 0 else np.zeros(n)

    order = rng.permutation(n)
    n_long = int(round(config.long_tail_share * n))
    outliers = order[: config.outlier_count]
    long_tail = order[config.outlier_count : config.outlier_count + n_long]
    regular = np.ones(n, dtype=bool)
    regular[outliers] = regular[long_tail] = False

    durations = np.empty(n)
    durations[outliers] = np.round(rng.uniform(0.5, 4.9, size=outliers.size), 1)
    durations[long_tail] = np.exp(
        rng.uniform(np.log(100.0), np.log(config.max_duration), size=long_tail.size)
    )
    budget = config.target_mean * n - durations[outliers].sum() - durations[long_tail].sum()
    weights = np.exp(linear + noise)
    if regular.any() and budget <= 0:
        raise InfeasibleConfig("target mean unreachable with this long tail")
    scale = budget / weights[regular].sum() if regular.any() else 1.0
    low, high = Config.Incidents.MIN_DURATION, config.max_duration
    durations[regular] = np.clip(scale * weights[regular], low, high)
    noiseless = np.clip(scale * np.exp(linear), low, high)

    incidents = [IncidentRecord(duration_min=float(d), **row) for row, d in zip(rows, durations)]
    ranking = tuple(
        name for name, beta in sorted(effects.items(), key=lambda kv: (-abs(kv[1]), kv[0])) if beta
    )
    truth = GroundTruth(
        ids=tuple(r["id"] for r in rows),
        noiseless=noiseless,
        contributions=contributions,
        ranking=ranking,
    )
    logger.info(
        "generated %d incidents (mean %.2f min, max %.1f), %d sections, %d flows",
        n,
        durations.mean(),
        durations.max(),
        len(sections),
        len(flows),
    )
    return SyntheticDataset(incidents, sections, flows, truth)


def write_dataset(dataset: SyntheticDataset, directory: PathLike) -> Dict[str, Path]:
    """Write the four CSV files, creating directory when absent."""
    directory = Path(directory)
    paths = {key: directory / name for key, name in Config.Synth.FILES.items()}
    try:
        directory.mkdir(parents=True, exist_ok=True)
        write_incidents(dataset.incidents, paths["incidents"])
        write_sections(dataset.sections, paths["sections"])
        write_flows(dataset.flows, paths["flows"])
        dataset.ground_truth.to_frame().to_csv(paths["ground_truth"], index=False)
    except OSError as e:
        raise IoFailure(f"cannot write dataset to {directory}: {e}") from e
    logger.info("wrote dataset to %s", directory)
    return paths


def load_ground_truth(path: PathLike) -> pd.DataFrame:
    """Read ground_truth.csv."""
    return pd.read_csv(path, dtype={"id": str})
