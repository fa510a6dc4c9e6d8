#!/usr/bin/env python3
"""Command-line entry point: generate, train, evaluate, predict, explain and profile.

Every option declared in config.yaml is also a flag of every subcommand. Values
resolve as flags over the --config run file over the config.yaml defaults.
"""

# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError, validator

from config import Config
from exceptions import EmptyInput, IncidentToolkitError
from flow_features import FeatureSetSpec, FlowStore, build_features, dv_sensitivity
from learners import LearnerSpec
from pipeline import (
    PipelineConfig,
    compare_classifiers,
    compare_feature_sets,
    compare_regressors,
    fit_bilevel,
    labels,
    load_bundle,
    outcomes_frame,
    predict_many,
    save_bundle,
)
from profiling import duration_summary, eccdf, feature_correlation, outlier_sweep, two_regime_fit
from records import (
    IncidentRecord,
    encode,
    filter_outliers,
    load_flows,
    load_incidents,
    load_sections,
)
from shapley import (
    default_background,
    explain_prediction,
    explain_rows,
    summarize,
    values_table,
)
from synth import GeneratorConfig, generate, write_dataset
from tuning import TuningSettings, evaluate, load_search_space, trial_log

logger = logging.getLogger(__name__)

OPTION_TYPES = {"int": int, "float": float, "string": str, "boolean": bool}
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]
STAGES = ["classifier", "regressor"]
METHODS = ["auto", Config.Shapley.EXACT, Config.Shapley.MONTE_CARLO]
PATH_FLAGS = ("out", "data", "bundle", "incidents", "instance")


class UsageError(Exception):
    """Raised when options are unknown, malformed or inconsistent."""


def _split(text: str) -> List[str]:
    return [item.strip() for item in str(text).split(",") if item.strip()]


class RunConfig(BaseModel):
    """Resolved options of one command."""

    command: str
    out: Optional[str] = None
    data: Optional[str] = None
    bundle: Optional[str] = None
    incidents: Optional[str] = None
    instance: Optional[str] = None

    seed: int
    threads: int
    log_level: str
    n_incidents: int
    n_sections: int
    n_plain_sections: int
    noise_sigma: float
    outlier_count: int
    flat_flows: bool
    feature_set: str
    k_nearest: int
    dv: float
    threshold: float
    min_duration: float
    classifier: str
    regressor: str
    loss: str
    log_space: bool
    outer_k: int
    inner_k: int
    n_iter: int
    search_space: str
    families: str
    losses: str
    feature_sets: str
    dv_set: str
    outlier_thresholds: str
    stage: str
    method: str
    permutations: int
    background_rows: int
    max_rows: int

    class Config:
        extra = "forbid"

    @validator("log_level")
    def _level(cls, value):
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"unknown log level {value}")
        return value

    @validator("feature_set")
    def _variant(cls, value):
        value = value.upper()
        if value not in Config.Features.VARIANTS:
            raise ValueError(f"unknown feature set {value}")
        return value

    @validator("classifier", "regressor")
    def _family(cls, value):
        if value not in Config.Families.ALL:
            raise ValueError(f"unknown family {value}")
        return value

    @validator("loss")
    def _loss(cls, value):
        if value not in Config.Booster.REGRESSION_LOSSES:
            raise ValueError(f"unknown regression loss {value}")
        return value

    @validator("families")
    def _families(cls, value):
        unknown = [f for f in _split(value) if f not in Config.Families.ALL]
        if unknown:
            raise ValueError(f"unknown family {unknown[0]}")
        return value

    @validator("feature_sets")
    def _feature_sets(cls, value):
        unknown = [v for v in _split(value) if v.upper() not in Config.Features.VARIANTS]
        if unknown:
            raise ValueError(f"unknown feature set {unknown[0]}")
        return value

    @validator("stage")
    def _stage(cls, value):
        if value not in STAGES:
            raise ValueError(f"unknown stage {value}")
        return value

    @validator("method")
    def _method(cls, value):
        if value not in METHODS:
            raise ValueError(f"unknown attribution method {value}")
        return value

    @validator("threads", "outer_k", "max_rows")
    def _not_negative(cls, value):
        if value < 0:
            raise ValueError("must not be negative")
        return value

    @property
    def workers(self) -> int:
        """Thread count with 0 resolved to the available cores."""
        return self.threads or os.cpu_count() or 1

    def tuning(self) -> TuningSettings:
        """Tuning settings of both stages."""
        space = None
        if self.search_space:
            space = yaml.safe_load(Path(self.search_space).read_text())
            load_search_space(space)
        return TuningSettings(
            outer_k=self.outer_k or None,
            inner_k=self.inner_k,
            n_iter=self.n_iter,
            seed=self.seed,
            threads=self.workers,
            space=space,
        )

    def features(self) -> FeatureSetSpec:
        """Feature set of the regression stage."""
        return FeatureSetSpec(variant=self.feature_set, k_nearest=self.k_nearest, dv=self.dv)

    def classifier_spec(self) -> LearnerSpec:
        """Learner of the classification stage."""
        return LearnerSpec(family=self.classifier, task=Config.Families.CLASSIFY)

    def regressor_spec(self) -> LearnerSpec:
        """Learner of the regression stage; the loss applies to boosted families."""
        boosted = self.regressor in (Config.Families.BOOSTER, Config.Families.GBDT)
        return LearnerSpec(
            family=self.regressor,
            task=Config.Families.REGRESS,
            loss=self.loss if boosted else None,
            log_space=self.log_space,
        )

    def pipeline(self) -> PipelineConfig:
        """Bi-level framework settings."""
        return PipelineConfig(
            threshold=self.threshold,
            classifier=self.classifier_spec(),
            regressor=self.regressor_spec(),
            features=self.features(),
            tuning=self.tuning(),
            min_duration=self.min_duration,
            seed=self.seed,
        )


# BEGIN: option resolution
def load_options(path: Path = Config.OPTIONS_FILE) -> Dict[str, Dict[str, Any]]:
    """Option schema of config.yaml."""
    return yaml.safe_load(Path(path).read_text())["options"]


def read_run_config(path: str) -> Dict[str, Any]:
    """Flat `key = value` file; values decode as YAML scalars and `#` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read run config {path}: {e}") from e
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, text = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{number}: expected key = value")
        try:
            value = yaml.safe_load(text.strip()) if text.strip() else ""
        except yaml.YAMLError as e:
            raise UsageError(f"{path}:{number}: {e}") from e
        values[key.strip().replace("_", "-")] = value
    return values


def resolve(
    command: str, flags: Mapping[str, Any], options: Mapping[str, Dict[str, Any]]
) -> Tuple[RunConfig, Set[str]]:
    """Merge defaults, run-config file and flags; returns the config and the explicit keys."""
    values = {name: spec.get("default") for name, spec in options.items()}
    explicit: Dict[str, Any] = {}
    if flags.get("config"):
        explicit.update(read_run_config(flags["config"]))
    explicit.update(
        {k: v for k, v in flags.items() if k in options or k in PATH_FLAGS and v is not None}
    )
    unknown = sorted(k for k in explicit if k not in options and k not in PATH_FLAGS)
    if unknown:
        raise UsageError(f"unknown option {unknown[0]}")
    values.update(explicit)
    try:
        run = RunConfig(command=command, **{k.replace("-", "_"): v for k, v in values.items()})
    except ValidationError as e:
        raise UsageError(str(e)) from e
    if command == "train" and "dv" in explicit and run.feature_set != Config.Features.FSD:
        raise UsageError("dv applies to the FSD feature set only")
    return run, set(explicit)


# END: option resolution


# BEGIN: commands
def _data_files(directory: str) -> Dict[str, Path]:
    return {key: Path(directory) / name for key, name in Config.Synth.FILES.items()}


def _load_network(directory: str):
    files = _data_files(directory)
    sections = load_sections(files["sections"])
    flows = FlowStore(load_flows(files["flows"]))
    return sections, flows


def _load_training(run: RunConfig):
    incidents = load_incidents(_data_files(run.data)["incidents"])
    sections, flows = _load_network(run.data)
    records = filter_outliers(incidents, run.min_duration)
    if not records:
        raise EmptyInput("no incidents left after outlier filtering")
    return records, sections, flows


def _short(records: Sequence[IncidentRecord], threshold: float) -> List[IncidentRecord]:
    return [r for r in records if r.duration_min <= threshold]


def _single_class(y) -> bool:
    return len(set(y.tolist())) < 2


def _write(frame: pd.DataFrame, directory: Path, name: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    frame.to_csv(path, index=False)
    logger.info("wrote %s", path)
    return path


def cmd_generate(run: RunConfig) -> None:
    """Draw a synthetic dataset and write its four CSV files."""
    dataset = generate(
        GeneratorConfig(
            n_incidents=run.n_incidents,
            n_sections=run.n_sections,
            n_plain_sections=run.n_plain_sections,
            seed=run.seed,
            noise_sigma=run.noise_sigma,
            outlier_count=run.outlier_count,
            flat_flows=run.flat_flows,
        )
    )
    write_dataset(dataset, run.out)
    below = sum(1 for r in dataset.incidents if r.duration_min < Config.Incidents.MIN_DURATION)
    detectors = sum(1 for s in dataset.sections if s.has_detectors)
    print(f"incidents: {len(dataset.incidents)} ({below} below 5 min)")
    print(f"sections: {len(dataset.sections)} ({detectors} with detectors)")
    print(f"flows: {len(dataset.flows)}")


def cmd_train(run: RunConfig) -> None:
    """Nested evaluation of both stages, then the final bi-level model and its bundle."""
    records, sections, flows = _load_training(run)
    settings = run.tuning()
    out = Path(run.out)

    baseline = encode(records)
    y = labels(baseline.target, run.threshold)
    if _single_class(y):
        logger.warning("a single class in training data; classifier evaluation skipped")
    else:
        result = evaluate(
            run.classifier_spec(), baseline, y, settings, Config.Tuning.CLASSIFY_METRICS
        )
        _write(result.to_frame(), out, "classifier_scores.csv")
        print(f"classifier inner fits: {result.inner_fits}")

    short = _short(records, run.threshold)
    if short:
        matrix = build_features(short, sections, flows, run.features())
        result = evaluate(
            run.regressor_spec(), matrix, None, settings, Config.Tuning.REGRESS_METRICS
        )
        _write(result.to_frame(), out, "regressor_scores.csv")
        print(f"regressor inner fits: {result.inner_fits}")

    model = fit_bilevel(records, sections, flows, run.pipeline())
    save_bundle(model, out, run.dict())
    for stage, search in model.searches.items():
        _write(trial_log(search), out, f"{stage}_trials.csv")
    print(f"bundle: {out}")


def cmd_evaluate(run: RunConfig) -> None:
    """Per-fold scores of the configured learners and the comparison tables."""
    records, sections, flows = _load_training(run)
    settings = run.tuning()
    out = Path(run.out)

    baseline = encode(records)
    y = labels(baseline.target, run.threshold)
    if _single_class(y):
        logger.warning("a single class in the data; classifier tables skipped")
    else:
        result = evaluate(
            run.classifier_spec(), baseline, y, settings, Config.Tuning.CLASSIFY_METRICS
        )
        _write(result.to_frame(), out, "classifier_folds.csv")
        table = compare_classifiers(records, _split(run.families), settings, run.threshold)
        _write(table, out, "classifier_comparison.csv")

    short = _short(records, run.threshold)
    if not short:
        logger.warning("no short incidents; regression tables skipped")
        return
    matrix = build_features(short, sections, flows, run.features())
    result = evaluate(run.regressor_spec(), matrix, None, settings, Config.Tuning.REGRESS_METRICS)
    _write(result.to_frame(), out, "regressor_folds.csv")
    table = compare_regressors(
        short,
        sections,
        flows,
        families=_split(run.families),
        losses=_split(run.losses),
        features=run.features(),
        settings=settings,
        log_space=run.log_space,
    )
    _write(table, out, "regressor_comparison.csv")
    table = compare_feature_sets(
        short,
        sections,
        flows,
        variants=[v.upper() for v in _split(run.feature_sets)],
        learner=run.regressor_spec(),
        settings=settings,
        k_nearest=run.k_nearest,
        dv=run.dv,
    )
    _write(table, out, "feature_sets.csv")
    radii = [float(v) for v in _split(run.dv_set)]
    if radii:
        table = dv_sensitivity(short, sections, flows, radii, run.regressor_spec(), settings)
        _write(table, out, "dv_sensitivity.csv")


def cmd_predict(run: RunConfig) -> None:
    """Route new incidents through a saved bundle."""
    model = load_bundle(run.bundle)
    sections, flows = _load_network(run.data)
    path = run.incidents or _data_files(run.data)["incidents"]
    incidents = load_incidents(path, require_target=False)
    outcomes = predict_many(model, incidents, sections, flows)
    out = Path(run.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outcomes_frame(outcomes).to_csv(out, index=False)
    n_short = sum(1 for o in outcomes if o.duration is not None)
    print(f"predictions: {len(outcomes)} ({n_short} short, {len(outcomes) - n_short} long)")


def cmd_explain(run: RunConfig) -> None:
    """Attribution summary of one stage of a bundle and an optional per-incident breakdown."""
    model = load_bundle(run.bundle)
    sections, flows = _load_network(run.data)
    incidents = load_incidents(
        run.incidents or _data_files(run.data)["incidents"], require_target=False
    )
    if run.stage == "classifier":
        estimator = model.classifier

        def build(records):
            return encode(records, encoder=model.encoder)

        rows = incidents
    else:
        estimator = model.regressor

        def build(records):
            return build_features(records, sections, flows, model.features, encoder=model.encoder)

        rows = [
            r for r in incidents if r.duration_min is None or r.duration_min <= model.threshold
        ]
    if not rows:
        raise EmptyInput("no incidents to explain")
    matrix = build(rows)
    background = default_background(matrix, run.background_rows, run.seed)
    if run.max_rows:
        matrix = matrix.take(range(min(run.max_rows, matrix.n_rows)))
    reports = explain_rows(
        estimator, matrix, background, run.method, run.permutations, run.seed, run.workers
    )
    out = Path(run.out)
    _write(summarize(reports), out, "shap_summary.csv")
    _write(values_table(reports, matrix), out, "shap_values.csv")

    if run.instance:
        chosen = [r for r in incidents if r.id == run.instance]
        if not chosen:
            raise EmptyInput(f"no incident {run.instance}")
        parts = explain_prediction(
            estimator,
            build(chosen),
            background,
            run.method,
            run.permutations,
            run.seed,
            run.workers,
        )
        _write(parts.to_frame(), out, f"breakdown_{run.instance}.csv")
        print(f"{run.instance}: base {parts.base_value:.4f}, prediction {parts.prediction:.4f}")
    print(f"explained {len(reports)} incidents over {matrix.n_cols} features")


def cmd_profile(run: RunConfig) -> None:
    """Duration statistics, ECCDF and its two-regime fit, correlations, outlier study."""
    incidents = load_incidents(_data_files(run.data)["incidents"])
    sections, flows = _load_network(run.data)
    out = Path(run.out)
    _write(duration_summary(incidents, run.threshold), out, "duration_summary.csv")
    durations = [r.duration_min for r in incidents]
    values, survival = eccdf(durations)
    _write(pd.DataFrame({"duration": values, "survival": survival}), out, "eccdf.csv")
    fit = two_regime_fit(durations)
    row = {
        "breakpoint": fit.breakpoint,
        "slope_low": fit.slope_low,
        "slope_high": fit.slope_high,
        "sse_one": fit.sse_one,
        "sse_two": fit.sse_two,
        "lr_statistic": fit.lr_statistic,
    }
    _write(pd.DataFrame([row]), out, "two_regime.csv")
    records = filter_outliers(incidents, run.min_duration)
    correlation = feature_correlation(encode(records)).rename_axis("feature").reset_index()
    _write(correlation, out, "correlation.csv")
    table = outlier_sweep(
        incidents,
        [float(v) for v in _split(run.outlier_thresholds)],
        run.regressor_spec(),
        run.tuning(),
        sections,
        flows,
        FeatureSetSpec(variant=Config.Features.BFS),
    )
    _write(table, out, "outlier_sweep.csv")
    print(f"profiled {len(incidents)} incidents; two-regime breakpoint {fit.breakpoint:.1f} min")


COMMANDS: Dict[str, Tuple[Callable[[RunConfig], None], Tuple[str, ...]]] = {
    "generate": (cmd_generate, ("out",)),
    "train": (cmd_train, ("data", "out")),
    "evaluate": (cmd_evaluate, ("data", "out")),
    "predict": (cmd_predict, ("bundle", "data", "out")),
    "explain": (cmd_explain, ("bundle", "data", "out")),
    "profile": (cmd_profile, ("data", "out")),
}


# END: commands


def build_parser(options: Mapping[str, Dict[str, Any]]) -> argparse.ArgumentParser:
    """Parser with one subcommand per command; every option is a flag with no default."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value run-config file")
    for name, spec in options.items():
        kind = spec.get("type", "string")
        if kind == "boolean":
            common.add_argument(
                f"--{name}",
                action=argparse.BooleanOptionalAction,
                default=argparse.SUPPRESS,
                help=spec.get("description"),
            )
        else:
            common.add_argument(
                f"--{name}",
                type=OPTION_TYPES[kind],
                default=argparse.SUPPRESS,
                help=spec.get("description"),
            )
    common.add_argument("--incidents", help="incident CSV replacing <data>/incidents.csv")
    common.add_argument("--instance", help="incident id to break down (explain)")

    parser = argparse.ArgumentParser(prog="incident-duration", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)
    for command, (handler, required) in COMMANDS.items():
        sub = commands.add_parser(command, parents=[common], help=handler.__doc__)
        for path in ("out", "data", "bundle"):
            if path in required:
                sub.add_argument(f"--{path}", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the exit status."""
    options = load_options()
    parser = build_parser(options)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return Config.Cli.EXIT_OK if e.code in (0, None) else Config.Cli.EXIT_USAGE
    flags = {k.replace("_", "-"): v for k, v in vars(args).items() if k != "command"}
    try:
        run, _ = resolve(args.command, flags, options)
    except UsageError as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return Config.Cli.EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, run.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    handler, _ = COMMANDS[args.command]
    try:
        handler(run)
    except (IncidentToolkitError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return Config.Cli.EXIT_RUNTIME
    return Config.Cli.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
