"""Configuration for the incident-duration toolkit."""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

from pathlib import Path
from typing import Dict, List, Literal, Tuple


class Config:
    """Constants shared by every module of the toolkit."""

    ROOT_DIR = Path(__file__).resolve().parent.parent
    OPTIONS_FILE = ROOT_DIR / "config.yaml"
    DOCUMENT_FORMAT = "incident-duration-model"
    DOCUMENT_VERSION = 1

    class Incidents:
        """Incident table columns and ranges."""

        ID = "id"
        X = "x"
        Y = "y"
        REPORT_TIME = "report_time"
        DURATION = "duration_min"
        MANDATORY = [ID, X, Y, REPORT_TIME, DURATION]

        NUMERIC = "numeric"
        CATEGORICAL = "categorical"
        BOOLEAN = "boolean"
        Kind = Literal[NUMERIC, CATEGORICAL, BOOLEAN]

        # baseline feature columns in schema order, with their encoded kind
        BASELINE: List[Tuple[str, str]] = [
            ("x", NUMERIC),
            ("y", NUMERIC),
            ("hour_of_day", NUMERIC),
            ("peak_hour", BOOLEAN),
            ("day_of_week", NUMERIC),
            ("weekend", BOOLEAN),
            ("month", NUMERIC),
            ("subtype", CATEGORICAL),
            ("affected_lanes", CATEGORICAL),
            ("direction", CATEGORICAL),
            ("severity", NUMERIC),
            ("incident_source", NUMERIC),
            ("unplanned", BOOLEAN),
            ("avg_temperature", NUMERIC),
            ("rainfall", NUMERIC),
            ("public_holiday", BOOLEAN),
            ("sector_id", CATEGORICAL),
            ("tz_name", CATEGORICAL),
            ("section_id", CATEGORICAL),
            ("section_class", CATEGORICAL),
            ("street_id", CATEGORICAL),
            ("intersection_id", CATEGORICAL),
            ("section_speed", NUMERIC),
            ("section_lanes", NUMERIC),
            ("section_capacity", NUMERIC),
            ("distance_from_cbd", NUMERIC),
        ]
        INTEGER_FIELDS = {
            "hour_of_day",
            "day_of_week",
            "month",
            "severity",
            "incident_source",
            "section_lanes",
        }
        RANGES: Dict[str, Tuple[float, float]] = {
            "hour_of_day": (0, 23),
            "day_of_week": (1, 7),
            "month": (1, 12),
            "severity": (1, 10),
            "incident_source": (1, 3),
            "section_lanes": (0, 6),
        }
        AFFECTED_LANES_ORDER = [
            "Null",
            "1 lane",
            "2 lanes",
            "3 lanes",
            "4 lanes",
            "All lanes",
            "breakdown",
        ]
        TRUE_VALUES = {"1", "true", "yes", "y", "t"}
        FALSE_VALUES = {"0", "false", "no", "n", "f"}
        MIN_DURATION = 5.0

    class Sections:
        """Road-section and detector-flow tables."""

        COLUMNS = ["section_id", "x", "y", "speed_limit", "lanes", "capacity", "has_detectors"]
        FLOW_COLUMNS = ["section_id", "bin_start", "flow"]
        BIN_MINUTES = 15
        HISTORY_MINUTES = 60

    class Features:
        """Flow feature-set variants."""

        BFS = "BFS"
        FSA = "FSA"
        FSB = "FSB"
        FSC = "FSC"
        FSD = "FSD"
        VARIANTS = [BFS, FSA, FSB, FSC, FSD]
        Variant = Literal[BFS, FSA, FSB, FSC, FSD]
        K_NEAREST = 5
        DV = 500.0
        DV_SENSITIVITY = [100.0, 200.0, 300.0, 500.0, 600.0]
        TRIPLE = ("trf", "tfh", "tfr")

    class Booster:
        """Tree-boosting defaults."""

        CURVATURE_FLOOR = 1e-6
        SQUARED_ERROR = "squared_error"
        LOGISTIC = "logistic"
        ABSOLUTE = "absolute"
        MAPE = "mape"
        LOSSES = [SQUARED_ERROR, LOGISTIC, ABSOLUTE, MAPE]
        REGRESSION_LOSSES = [SQUARED_ERROR, ABSOLUTE, MAPE]
        IDENTITY = "identity"
        LOG = "log"

    class Families:
        """Estimator family tags."""

        BOOSTER = "booster"
        GBDT = "gbdt"
        FOREST = "forest"
        KNN = "knn"
        LINEAR = "linear"
        MEAN = "mean"
        ALL = [BOOSTER, GBDT, FOREST, KNN, LINEAR, MEAN]
        TREE_BASED = {BOOSTER, GBDT, FOREST}

        CLASSIFY = "classify"
        REGRESS = "regress"
        Task = Literal[CLASSIFY, REGRESS]

    class Tuning:
        """Cross-validation and randomized-search defaults."""

        CLASSIFY_OUTER_K = 5
        REGRESS_OUTER_K = 10
        INNER_K = 5
        N_ITER = 500
        MAXIMIZE = {"accuracy", "precision", "recall", "f1", "r2"}
        MINIMIZE = {"mape", "mse", "mae"}
        CLASSIFY_METRICS = ["accuracy", "precision", "recall", "f1"]
        REGRESS_METRICS = ["mape", "r2"]
        CLASSIFY_OBJECTIVE = "f1"
        REGRESS_OBJECTIVE = "mape"
        LINEAR_TOLERANCE = 1e-8
        LINEAR_MAX_ITER = 100

    class Shapley:
        """Attribution defaults."""

        EXACT_LIMIT = 15
        BACKGROUND_ROWS = 100
        PERMUTATIONS = 200
        EXACT = "exact"
        MONTE_CARLO = "monte_carlo"

    class Pipeline:
        """Bi-level framework defaults."""

        THRESHOLD = 45.0
        SHORT = "short"
        LONG = "long"
        STEP3_FLAG = "extended features required (Step 3)"
        CLASSIFIER_DOCUMENT = "classifier.json"
        REGRESSOR_DOCUMENT = "regressor.json"
        MANIFEST = "manifest.yaml"

    class Synth:
        """Synthetic-generator defaults."""

        N_INCIDENTS = 574
        N_SECTIONS = 235
        N_PLAIN_SECTIONS = 40
        OUTLIER_COUNT = 27
        TARGET_MEAN = 44.59
        MAX_DURATION = 719.0
        PLANE_SIZE = 5000.0
        CBD = (0.0, 0.0)
        FILES = {
            "incidents": "incidents.csv",
            "sections": "sections.csv",
            "flows": "flows.csv",
            "ground_truth": "ground_truth.csv",
        }

    class Cli:
        """Exit codes of the command-line entry point."""

        EXIT_OK = 0
        EXIT_RUNTIME = 1
        EXIT_USAGE = 2
        COMMANDS = ["generate", "train", "evaluate", "predict", "explain", "profile"]

    @staticmethod
    def baseline_names() -> List[str]:
        """Return the baseline feature names in schema order."""
        return [name for name, _ in Config.Incidents.BASELINE]
