"""Run configuration.

A :class:`RunConfig` merges, lowest priority first: built-in defaults,
command-line flags, a YAML config file and the ``LLSP_WORKERS``
environment variable (worker count only).
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from pydantic import (BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt,
                      ValidationError, field_validator, model_validator)

from .classifiers import ClassifierKind
from .data_ingest import BONN_FILE_PREFIXES, BONN_SET_DIRS, ClassSpec, Label, SplitMode
from .errors import ConfigError
from .features import FEATURE_RANK_TOL, GridSpec
from .selection import SetTag, parse_selection
from .signal_model import (BONN_SAMPLE_RATE, DEFAULT_POLYNOMIAL_DEGREE, DEFAULT_SPLINE_DEGREE,
                           DEFAULT_SPLINE_INTERVALS, LlspVariant)
from .util.lang import duplicates, stable_hash

_logger = logging.getLogger(__name__)

SYNTHETIC = "synthetic"
RAW = "raw"
WORKERS_ENV = "LLSP_WORKERS"

ALL_VARIANTS = [v.value for v in LlspVariant] + [RAW]


class SplitConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode:           SplitMode = SplitMode.stratified_random
    train_fraction: float = Field(0.9, gt=0.0, lt=1.0)
    exact_counts:   Optional[Tuple[PositiveInt, PositiveInt]] = None
    seed:           int = 0


class SyntheticClass(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    frequency: NonNegativeFloat
    amplitude: Tuple[float, ...] = (1.0,)
    noise:     NonNegativeFloat = 0.0
    phase:     float = 0.0


class SyntheticConfig(BaseModel):
    """Two planted classes: first non-seizure, second seizure."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    classes:     Tuple[SyntheticClass, SyntheticClass] = (
        SyntheticClass(frequency=2.53, noise=0.05), SyntheticClass(frequency=20.53, noise=0.05))
    count:       PositiveInt = 20
    length:      PositiveInt = 512
    sample_rate: PositiveFloat = BONN_SAMPLE_RATE
    seed:        int = 0

    def class_specs(self):
        labels = (Label.non_seizure, Label.seizure)
        return [ClassSpec(label=label, frequency=c.frequency, amplitude=c.amplitude,
                          noise=c.noise, phase=c.phase)
                for label, c in zip(labels, self.classes)]


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    data_root:              Union[Path, str] = SYNTHETIC
    set_dirs:               Dict[SetTag, str] = Field(default_factory=lambda: dict(BONN_SET_DIRS), validate_default=True)
    file_prefixes:          Dict[SetTag, str] = Field(default_factory=lambda: dict(BONN_FILE_PREFIXES), validate_default=True)
    strict_length:          bool = True
    experiment:             int = Field(4, ge=1, le=4)
    selection:              Optional[str] = None
    variants:               List[str] = Field(default_factory=lambda: ["llsp1"])
    classifiers:            List[ClassifierKind] = Field(
        default_factory=lambda: [k for k in ClassifierKind])
    grid:                   GridSpec = GridSpec()
    rank_tol:               float = Field(FEATURE_RANK_TOL, gt=0.0, lt=1.0)
    fit_curves:             List[str] = Field(default_factory=list)
    polynomial_degree:      PositiveInt = DEFAULT_POLYNOMIAL_DEGREE
    spline_degree:          PositiveInt = DEFAULT_SPLINE_DEGREE
    spline_intervals:       PositiveInt = DEFAULT_SPLINE_INTERVALS
    split:                  SplitConfig = SplitConfig()
    synthetic:              SyntheticConfig = SyntheticConfig()
    logistic_memory_cap_mb: PositiveFloat = 512.0
    workers:                PositiveInt = 1
    output:                 Path = Path("llsp-out")

    @field_validator("data_root")
    @classmethod
    def _data_root(cls, v):
        if isinstance(v, str) and v == SYNTHETIC:
            return v
        return Path(v)

    @field_validator("set_dirs", "file_prefixes")
    @classmethod
    def _fill_sets(cls, v, info):
        defaults = BONN_SET_DIRS if info.field_name == "set_dirs" else BONN_FILE_PREFIXES
        return {**{SetTag(k): d for k, d in defaults.items()}, **v}

    @field_validator("variants")
    @classmethod
    def _variants(cls, v):
        if not v:
            raise ValueError("at least one variant is required")
        v = [str(x).lower() for x in v]
        unknown = [x for x in v if x not in ALL_VARIANTS]
        if unknown:
            raise ValueError("unknown variants {}; choose from {}".format(unknown, ALL_VARIANTS))
        if duplicates(v):
            raise ValueError("repeated variants {}".format(duplicates(v)))
        return v

    @field_validator("classifiers")
    @classmethod
    def _classifiers(cls, v):
        if not v:
            raise ValueError("at least one classifier is required")
        if duplicates(v):
            raise ValueError("repeated classifiers {}".format([k.value for k in duplicates(v)]))
        return v

    @field_validator("selection")
    @classmethod
    def _selection(cls, v):
        if v is not None:
            parse_selection(v)
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.selection is not None and self.is_synthetic:
            raise ValueError("a selection needs Bonn data, not data_root: synthetic")
        if self.fit_curves and not self.llsp_variants:
            raise ValueError("fit_curves needs at least one llsp variant")
        return self

    @property
    def is_synthetic(self) -> bool:
        return isinstance(self.data_root, str)

    @property
    def llsp_variants(self) -> List[LlspVariant]:
        return [LlspVariant(v) for v in self.variants if v != RAW]

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; differs iff some field differs."""
        return stable_hash(self.model_dump(mode="json"))


def _format_validation(err : ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "config"
        lines.append("{}: {}".format(where, e["msg"]))
    return "invalid configuration:\n  " + "\n  ".join(lines)


def read_config_file(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as err:
        raise ConfigError("cannot read config file {}: {}".format(path, err))
    except yaml.YAMLError as err:
        raise ConfigError("config file {} is not valid YAML: {}".format(path, err))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file {} must hold a mapping, got {}".format(
            path, type(data).__name__))
    return data


def _merge(base : Dict[str, Any], override : Mapping[str, Any]) -> Dict[str, Any]:
    """Nested update of ``base``; None values in ``override`` are skipped."""
    merged = dict(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            inner = merged.get(key)
            value = _merge(inner if isinstance(inner, Mapping) else {}, value)
            if not value and key not in merged:
                continue
        merged[key] = value
    return merged


def load_config(path=None, flags : Optional[Mapping[str, Any]] = None,
                environ : Optional[Mapping[str, str]] = None) -> RunConfig:
    """Build and validate a RunConfig.

    Args:
      path: optional YAML file; its keys override ``flags``
      flags: values given on the command line (None entries are ignored)
      environ: environment to read ``LLSP_WORKERS`` from (default ``os.environ``)

    Raises:
      ConfigError: on any invalid field, with one line per offending field
    """
    values = _merge({}, flags or {})
    if path is not None:
        values = _merge(values, read_config_file(path))
    environ = os.environ if environ is None else environ
    if environ.get(WORKERS_ENV):
        try:
            values["workers"] = int(environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError("{}={!r} is not an integer".format(WORKERS_ENV, environ[WORKERS_ENV]))
    try:
        config = RunConfig.model_validate(values)
    except ValidationError as err:
        raise ConfigError(_format_validation(err))
    _logger.debug("configuration %s", config.config_hash()[:12])
    return config
