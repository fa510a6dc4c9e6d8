"""Incident, road-section and detector-flow records, their CSV formats and encoding.

The baseline feature matrix keeps MISSING as a cell state of its own: NaN in the
float grid, an empty cell on disk. Categorical fields are label-encoded through a
dictionary that travels with every model trained on the matrix.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import logging
import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import Config
from exceptions import (
    BadValue,
    EmptyFile,
    EmptyInput,
    MissingColumn,
    SchemaMismatch,
)

logger = logging.getLogger(__name__)

MISSING = float("nan")
PathLike = Union[str, Path]


def is_missing(values) -> np.ndarray:
    """Boolean mask of MISSING cells."""
    return np.isnan(np.asarray(values, dtype=float))


# BEGIN: domain types
@dataclass(frozen=True)
class IncidentRecord:
    """One reported incident; optional attributes are None when unknown."""

    id: str
    x: float
    y: float
    report_time: datetime
    duration_min: Optional[float]
    hour_of_day: Optional[int] = None
    peak_hour: Optional[bool] = None
    day_of_week: Optional[int] = None
    weekend: Optional[bool] = None
    month: Optional[int] = None
    subtype: Optional[str] = None
    affected_lanes: Optional[str] = None
    direction: Optional[str] = None
    severity: Optional[int] = None
    incident_source: Optional[int] = None
    unplanned: Optional[bool] = None
    avg_temperature: Optional[float] = None
    rainfall: Optional[float] = None
    public_holiday: Optional[bool] = None
    sector_id: Optional[str] = None
    tz_name: Optional[str] = None
    section_id: Optional[str] = None
    section_class: Optional[str] = None
    street_id: Optional[str] = None
    intersection_id: Optional[str] = None
    section_speed: Optional[float] = None
    section_lanes: Optional[int] = None
    section_capacity: Optional[float] = None
    distance_from_cbd: Optional[float] = None


@dataclass(frozen=True)
class RoadSection:
    """A road section reduced to its reference point."""

    section_id: str
    x: float
    y: float
    speed_limit: float
    lanes: int
    capacity: float
    has_detectors: bool


@dataclass(frozen=True)
class FlowObservation:
    """Vehicles counted on a section during one 15-minute bin."""

    section_id: str
    bin_start: datetime
    flow: float


@dataclass(frozen=True)
class ColumnSpec:
    """Name and encoded kind of one matrix column."""

    name: str
    kind: str


@dataclass(frozen=True)
class SchemaPolicy:
    """Vocabulary seeds applied before first-seen categories are appended."""

    ordered_categories: Mapping[str, Sequence[str]] = field(
        default_factory=lambda: {"affected_lanes": tuple(Config.Incidents.AFFECTED_LANES_ORDER)}
    )


DEFAULT_POLICY = SchemaPolicy()


class CategoricalEncoder:
    """Stable label codes for categorical fields, persisted with the model."""

    def __init__(self, dictionaries: Optional[Mapping[str, Sequence[str]]] = None):
        self.dictionaries: Dict[str, List[str]] = {
            name: list(values) for name, values in (dictionaries or {}).items()
        }
        self._index = {
            name: {value: code for code, value in enumerate(values)}
            for name, values in self.dictionaries.items()
        }

    @classmethod
    def fit(
        cls, records: Sequence[IncidentRecord], policy: SchemaPolicy = DEFAULT_POLICY
    ) -> "CategoricalEncoder":
        """Build dictionaries in first-seen order after the policy's seeds."""
        dictionaries: Dict[str, List[str]] = {}
        for name, kind in Config.Incidents.BASELINE:
            if kind != Config.Incidents.CATEGORICAL:
                continue
            vocabulary = list(policy.ordered_categories.get(name, ()))
            seen = set(vocabulary)
            for record in records:
                value = getattr(record, name)
                if value is not None and value not in seen:
                    seen.add(value)
                    vocabulary.append(value)
            dictionaries[name] = vocabulary
        return cls(dictionaries)

    def code(self, name: str, value: Optional[str]) -> float:
        """Code of a category; unknown or absent categories are MISSING."""
        if value is None:
            return MISSING
        code = self._index.get(name, {}).get(value)
        return MISSING if code is None else float(code)

    def decode(self, name: str, code: float) -> Optional[str]:
        """Category string of a code, None for MISSING."""
        if math.isnan(code):
            return None
        return self.dictionaries[name][int(code)]

    def to_document(self) -> Dict[str, List[str]]:
        """Serializable form."""
        return {name: list(values) for name, values in self.dictionaries.items()}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CategoricalEncoder) and self.dictionaries == other.dictionaries


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-major numeric grid with NaN as MISSING, a column schema and a target."""

    values: np.ndarray
    schema: Tuple[ColumnSpec, ...]
    target: np.ndarray
    row_ids: Tuple[str, ...] = ()
    encoder: Optional[CategoricalEncoder] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True, ndmin=2)
        target = np.array(self.target, dtype=float, copy=True).reshape(-1)
        if values.shape[1] != len(self.schema):
            raise SchemaMismatch(
                f"schema has {len(self.schema)} columns, values have {values.shape[1]}"
            )
        if target.shape[0] != values.shape[0]:
            raise SchemaMismatch(
                f"target has {target.shape[0]} rows, values have {values.shape[0]}"
            )
        for j, column in enumerate(self.schema):
            cells = values[:, j]
            present = cells[~np.isnan(cells)]
            if column.kind == Config.Incidents.BOOLEAN and not np.isin(present, (0.0, 1.0)).all():
                raise SchemaMismatch(
                    f"boolean column {column.name} holds non 0/1 values", column.name
                )
            if column.kind == Config.Incidents.CATEGORICAL and (
                (present < 0).any() or (present != np.floor(present)).any()
            ):
                raise SchemaMismatch(
                    f"categorical column {column.name} holds non-integer codes", column.name
                )
        values.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "schema", tuple(self.schema))
        row_ids = tuple(self.row_ids) or tuple(str(i) for i in range(values.shape[0]))
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        """Number of columns."""
        return self.values.shape[1]

    @property
    def names(self) -> List[str]:
        """Column names in schema order."""
        return [column.name for column in self.schema]

    def take(self, rows: Iterable[int]) -> "FeatureMatrix":
        """Sub-matrix of the given rows, schema and dictionaries unchanged."""
        rows = np.asarray(rows if isinstance(rows, np.ndarray) else list(rows))
        rows = np.flatnonzero(rows) if rows.dtype == bool else rows.astype(int)
        return replace(
            self,
            values=self.values[rows],
            target=self.target[rows],
            row_ids=tuple(self.row_ids[i] for i in rows),
        )

    def with_target(self, target: Sequence[float]) -> "FeatureMatrix":
        """Same features, new target vector."""
        return replace(self, target=np.asarray(target, dtype=float))

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        """Sub-matrix restricted to the named columns, in the given order."""
        index = {name: j for j, name in enumerate(self.names)}
        missing = [name for name in names if name not in index]
        if missing:
            raise SchemaMismatch(f"unknown column {missing[0]}", missing[0])
        columns = [index[name] for name in names]
        return replace(
            self,
            values=self.values[:, columns],
            schema=tuple(self.schema[j] for j in columns),
        )

    def append_columns(self, schema: Sequence[ColumnSpec], values: np.ndarray) -> "FeatureMatrix":
        """New matrix with extra columns on the right."""
        values = np.asarray(values, dtype=float).reshape(self.n_rows, len(schema))
        return replace(
            self,
            values=np.hstack([self.values, values]),
            schema=self.schema + tuple(schema),
        )

    def to_frame(self) -> pd.DataFrame:
        """Frame with a `kind:name` header, an id column and the target."""
        frame = pd.DataFrame(
            self.values, columns=[f"{c.kind}:{c.name}" for c in self.schema]
        )
        frame.insert(0, Config.Incidents.ID, list(self.row_ids))
        frame["target"] = self.target
        return frame

    def to_csv(self, path: PathLike) -> None:
        """Write the matrix; MISSING cells are left empty."""
        self.to_frame().to_csv(path, index=False, na_rep="")


# END: domain types


# BEGIN: CSV parsing helpers
def _read_table(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.EmptyDataError as e:
        raise EmptyFile(f"{path} has no header") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _require(frame: pd.DataFrame, columns: Iterable[str]) -> None:
    for column in columns:
        if column not in frame.columns:
            raise MissingColumn(column)


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp to minute resolution."""
    stamp = pd.Timestamp(text.strip())
    if pd.isna(stamp):
        raise ValueError(text)
    if stamp.tzinfo is not None:
        stamp = stamp.tz_convert(None)
    return stamp.floor("min").to_pydatetime()


def format_timestamp(stamp: datetime) -> str:
    """Inverse of parse_timestamp."""
    return stamp.strftime("%Y-%m-%dT%H:%M")


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in Config.Incidents.TRUE_VALUES:
        return True
    if lowered in Config.Incidents.FALSE_VALUES:
        return False
    raise ValueError(text)


def _parse_optional(name: str, kind: str, text: str, row: int):
    """Parse an optional cell; anything unparseable or out of range is None."""
    text = text.strip()
    if not text:
        return None
    try:
        if kind == Config.Incidents.CATEGORICAL:
            return text
        if kind == Config.Incidents.BOOLEAN:
            return _parse_bool(text)
        value = _parse_float(text)
        if name in Config.Incidents.INTEGER_FIELDS:
            if value != int(value):
                raise ValueError(text)
            value = int(value)
        bounds = Config.Incidents.RANGES.get(name)
        if bounds and not bounds[0] <= value <= bounds[1]:
            raise ValueError(text)
        return value
    except ValueError:
        logger.warning("row %d: %s=%r not usable, treated as missing", row, name, text)
        return None


# END: CSV parsing helpers


# BEGIN: loaders
def load_incidents(path: PathLike, require_target: bool = True) -> List[IncidentRecord]:
    """Load the incident table.

    Args:
        path: location of the incident CSV.
        require_target: whether duration_min is mandatory (False for prediction inputs).

    Returns:
        One record per data row, in file order.
    """
    frame = _read_table(path)
    mandatory = list(Config.Incidents.MANDATORY)
    if not require_target and Config.Incidents.DURATION not in frame.columns:
        mandatory.remove(Config.Incidents.DURATION)
    _require(frame, mandatory + Config.baseline_names())

    records = []
    for row, cells in enumerate(frame.to_dict("records"), start=1):
        records.append(_parse_incident(row, cells, require_target))
    logger.info("loaded %d incidents from %s", len(records), path)
    return records


def _parse_incident(row: int, cells: Mapping[str, str], require_target: bool) -> IncidentRecord:
    def mandatory(column, parser):
        text = cells.get(column, "").strip()
        try:
            if not text:
                raise ValueError(text)
            return parser(text)
        except (ValueError, TypeError) as e:
            raise BadValue(row, column, text) from e

    duration = None
    if require_target or cells.get(Config.Incidents.DURATION, "").strip():
        duration = mandatory(Config.Incidents.DURATION, _parse_float)
        if duration < 0:
            raise BadValue(row, Config.Incidents.DURATION, duration)

    optional = {}
    for name, kind in Config.Incidents.BASELINE:
        if name in (Config.Incidents.X, Config.Incidents.Y):
            continue
        optional[name] = _parse_optional(name, kind, cells.get(name, ""), row)

    # day_of_week arrives either as 1-7 or as 1-5 plus the weekend flag
    day = optional["day_of_week"]
    if day is not None and optional["weekend"] is None:
        optional["weekend"] = day >= 6

    return IncidentRecord(
        id=mandatory(Config.Incidents.ID, str),
        x=mandatory(Config.Incidents.X, _parse_float),
        y=mandatory(Config.Incidents.Y, _parse_float),
        report_time=mandatory(Config.Incidents.REPORT_TIME, parse_timestamp),
        duration_min=duration,
        **optional,
    )


def load_sections(path: PathLike) -> List[RoadSection]:
    """Load the road-section table."""
    frame = _read_table(path)
    _require(frame, Config.Sections.COLUMNS)
    sections = []
    seen = set()
    for row, cells in enumerate(frame.to_dict("records"), start=1):
        section_id = cells["section_id"].strip()
        if not section_id or section_id in seen:
            raise BadValue(row, "section_id", section_id)
        seen.add(section_id)
        try:
            sections.append(
                RoadSection(
                    section_id=section_id,
                    x=_parse_float(cells["x"]),
                    y=_parse_float(cells["y"]),
                    speed_limit=_parse_float(cells["speed_limit"]),
                    lanes=int(_parse_float(cells["lanes"])),
                    capacity=_parse_float(cells["capacity"]),
                    has_detectors=_parse_bool(cells["has_detectors"]),
                )
            )
        except ValueError as e:
            raise BadValue(row, "sections", str(e)) from e
    logger.info("loaded %d sections from %s", len(sections), path)
    return sections


def load_flows(path: PathLike) -> List[FlowObservation]:
    """Load detector flows aggregated on 15-minute bins."""
    frame = _read_table(path)
    _require(frame, Config.Sections.FLOW_COLUMNS)
    section_ids = frame["section_id"].str.strip()
    stamps = pd.to_datetime(frame["bin_start"].str.strip(), errors="coerce")
    flows = pd.to_numeric(frame["flow"].str.strip(), errors="coerce")

    def first_bad(mask, column):
        if mask.any():
            row = int(np.argmax(mask.to_numpy()))
            raise BadValue(row + 1, column, frame[column].iloc[row])

    first_bad(stamps.isna(), "bin_start")
    stamps = stamps.dt.floor("min")
    first_bad(stamps.dt.minute % Config.Sections.BIN_MINUTES != 0, "bin_start")
    first_bad(flows.isna() | ~np.isfinite(flows) | (flows < 0), "flow")
    first_bad(pd.concat([section_ids, stamps], axis=1).duplicated(), "bin_start")

    observations = [
        FlowObservation(section_id, stamp, float(flow))
        for section_id, stamp, flow in zip(
            section_ids, (s.to_pydatetime() for s in stamps), flows
        )
    ]
    logger.info("loaded %d flow observations from %s", len(observations), path)
    return observations


# END: loaders


# BEGIN: writers
def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, datetime):
        return format_timestamp(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def incidents_frame(records: Sequence[IncidentRecord]) -> pd.DataFrame:
    """Frame in the incident CSV layout, every cell already formatted."""
    columns = Config.Incidents.MANDATORY + Config.baseline_names()[2:]
    rows = [{name: _cell(getattr(record, name)) for name in columns} for record in records]
    return pd.DataFrame(rows, columns=columns)


def write_incidents(records: Sequence[IncidentRecord], path: PathLike) -> None:
    """Write records in the incident CSV layout."""
    incidents_frame(records).to_csv(path, index=False)


def write_sections(sections: Sequence[RoadSection], path: PathLike) -> None:
    """Write sections in the section CSV layout."""
    rows = [
        {name.name: _cell(getattr(section, name.name)) for name in fields(RoadSection)}
        for section in sections
    ]
    pd.DataFrame(rows, columns=Config.Sections.COLUMNS).to_csv(path, index=False)


def write_flows(observations: Sequence[FlowObservation], path: PathLike) -> None:
    """Write flows in the flow CSV layout."""
    rows = [
        {
            "section_id": o.section_id,
            "bin_start": format_timestamp(o.bin_start),
            "flow": _cell(float(o.flow)),
        }
        for o in observations
    ]
    pd.DataFrame(rows, columns=Config.Sections.FLOW_COLUMNS).to_csv(path, index=False)


# END: writers


def filter_outliers(
    records: Sequence[IncidentRecord], min_duration: float = Config.Incidents.MIN_DURATION
) -> List[IncidentRecord]:
    """Keep the records lasting at least min_duration minutes, in order."""
    kept = [r for r in records if r.duration_min is not None and r.duration_min >= min_duration]
    if len(kept) < len(records):
        logger.info(
            "removed %d incidents shorter than %s minutes", len(records) - len(kept), min_duration
        )
    return kept


def baseline_schema() -> Tuple[ColumnSpec, ...]:
    """Schema of the baseline feature set."""
    return tuple(ColumnSpec(name, kind) for name, kind in Config.Incidents.BASELINE)


def encode(
    records: Sequence[IncidentRecord],
    schema_policy: SchemaPolicy = DEFAULT_POLICY,
    encoder: Optional[CategoricalEncoder] = None,
) -> FeatureMatrix:
    """Encode records into the baseline feature matrix.

    When an encoder is given (unseen data), its dictionaries are applied as they
    are and unknown categories become MISSING; otherwise dictionaries are built
    from the records.
    """
    if not records:
        raise EmptyInput("cannot encode an empty record list")
    if encoder is None:
        encoder = CategoricalEncoder.fit(records, schema_policy)

    schema = baseline_schema()
    values = np.full((len(records), len(schema)), MISSING)
    for i, record in enumerate(records):
        for j, column in enumerate(schema):
            value = getattr(record, column.name)
            if column.kind == Config.Incidents.CATEGORICAL:
                values[i, j] = encoder.code(column.name, value)
            elif value is not None:
                values[i, j] = float(value)

    target = [MISSING if r.duration_min is None else r.duration_min for r in records]
    return FeatureMatrix(
        values=values,
        schema=schema,
        target=np.asarray(target, dtype=float),
        row_ids=tuple(r.id for r in records),
        encoder=encoder,
    )
