"""Confusion matrices, derived rates and result tables.

Confusion matrix layout (rows actual, columns predicted)::

                   non-seizure  seizure
    non-seizure  [     a           b   ]
    seizure      [     c           d   ]

The non-seizure class is the positive one: TPR = a/(a+b), TNR = d/(c+d).
A rate whose denominator is zero is undefined (``None``) and printed as N/A.
"""
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, NonNegativeInt, model_validator

from .errors import DataError

NA = "N/A"

#: Column order of accuracy tables; "raw" is the original-samples baseline.
VARIANT_ORDER = ["raw", "llsp1", "llsp2", "llsp3", "llsp4"]
CLASSIFIER_ORDER = ["knn1", "knn5", "logistic", "oner", "tree"]

METRIC_NAMES = ["acc", "tpr", "precision", "tnr", "fpr", "fnr"]


class ConfusionMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: NonNegativeInt = 0
    b: NonNegativeInt = 0
    c: NonNegativeInt = 0
    d: NonNegativeInt = 0

    @model_validator(mode="after")
    def _check(self):
        if self.total < 1:
            raise ValueError("empty confusion matrix")
        return self

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @classmethod
    def from_matrix(cls, m) -> "ConfusionMatrix":
        (a, b), (c, d) = m
        return cls(a=a, b=b, c=c, d=d)

    @classmethod
    def from_predictions(cls, actual : Iterable[int], predicted : Iterable[int]) -> "ConfusionMatrix":
        """Count 0/1 codes (0 = non-seizure, 1 = seizure)."""
        m = np.zeros((2, 2), dtype=int)
        for y, p in zip(actual, predicted):
            m[int(y), int(p)] += 1
        return cls.from_matrix(m.tolist())


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    acc:       Optional[NonNegativeFloat] = None
    tpr:       Optional[NonNegativeFloat] = None
    precision: Optional[NonNegativeFloat] = None
    tnr:       Optional[NonNegativeFloat] = None
    fpr:       Optional[NonNegativeFloat] = None
    fnr:       Optional[NonNegativeFloat] = None


def _ratio(num : int, den : int) -> Optional[float]:
    if den == 0:
        return None
    return num / den


def metrics(cm : ConfusionMatrix) -> MetricReport:
    a, b, c, d = cm.a, cm.b, cm.c, cm.d
    return MetricReport(
        acc       = _ratio(a + d, cm.total),
        tpr       = _ratio(a, a + b),
        precision = _ratio(a, a + c),
        tnr       = _ratio(d, c + d),
        fpr       = _ratio(b, a + b),
        fnr       = _ratio(c, c + d),
    )


def format_rate(value : Optional[float], digits : int = 2, percent : bool = False) -> str:
    if value is None:
        return NA
    if percent:
        return "{:.0f}".format(100 * value)
    return "{:.{}f}".format(value, digits)


class ResultEntry(BaseModel):
    """Outcome of one (experiment, variant, classifier) combination.

    ``confusion`` is None when the combination produced no answer.
    """
    experiment:    int
    variant:       str
    classifier:    str
    confusion:     Optional[ConfusionMatrix] = None
    train_seconds: Optional[float] = None
    test_seconds:  Optional[float] = None

    @property
    def report(self) -> MetricReport:
        if self.confusion is None:
            return MetricReport()
        return metrics(self.confusion)


ResultKey = Tuple[int, str, str]


def _ordered(values, canonical):
    known = [v for v in canonical if v in values]
    return known + sorted(v for v in values if v not in canonical)


def results_frame(results : Mapping[ResultKey, ResultEntry]) -> pd.DataFrame:
    """One row per combination; confusion counts and full-precision rates."""
    rows = []
    for key in sorted(results):
        entry = results[key]
        cm = entry.confusion
        rep = entry.report
        row = {"experiment": entry.experiment, "variant": entry.variant,
               "classifier": entry.classifier}
        for name in "abcd":
            row[name] = getattr(cm, name) if cm is not None else None
        for name in METRIC_NAMES:
            row[name] = getattr(rep, name)
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["experiment", "variant", "classifier", "a", "b", "c", "d"]
                         + METRIC_NAMES)
    for name in "abcd":
        frame[name] = frame[name].astype("Int64")
    return frame


def timings_frame(results : Mapping[ResultKey, ResultEntry]) -> pd.DataFrame:
    rows = [{"experiment": e.experiment, "variant": e.variant, "classifier": e.classifier,
             "train_seconds": e.train_seconds, "test_seconds": e.test_seconds}
            for _, e in sorted(results.items())]
    return pd.DataFrame(rows, columns=["experiment", "variant", "classifier",
                                       "train_seconds", "test_seconds"])


def write_results_csv(results : Mapping[ResultKey, ResultEntry], path) -> Path:
    path = Path(path)
    results_frame(results).to_csv(path, index=False, na_rep=NA, float_format="%.17g",
                                  lineterminator="\n")
    return path


def read_results_csv(path) -> Dict[ResultKey, ResultEntry]:
    path = Path(path)
    try:
        frame = pd.read_csv(path, na_values=[NA], keep_default_na=False,
                            float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise DataError("{}: {}".format(path, err))
    expected = ["experiment", "variant", "classifier", "a", "b", "c", "d"] + METRIC_NAMES
    if list(frame.columns) != expected:
        raise DataError("{}: expected columns {}".format(path, ",".join(expected)))
    results = {}
    for row in frame.itertuples(index=False):
        cm = None
        if not pd.isna(row.a):
            cm = ConfusionMatrix(a=int(row.a), b=int(row.b), c=int(row.c), d=int(row.d))
        entry = ResultEntry(experiment=int(row.experiment), variant=str(row.variant),
                            classifier=str(row.classifier), confusion=cm)
        results[(entry.experiment, entry.variant, entry.classifier)] = entry
    return results


def accuracy_table(results : Mapping[ResultKey, ResultEntry], experiment : int) -> pd.DataFrame:
    """Integer-percent accuracy, classifiers down, variants across."""
    entries = {k: v for k, v in results.items() if k[0] == experiment}
    classifiers = _ordered({k[2] for k in entries}, CLASSIFIER_ORDER)
    variants = _ordered(set(VARIANT_ORDER) | {k[1] for k in entries}, VARIANT_ORDER)
    table = pd.DataFrame(NA, index=classifiers, columns=variants)
    for (_, variant, classifier), entry in entries.items():
        table.loc[classifier, variant] = format_rate(entry.report.acc, percent=True)
    table.index.name = "classifier"
    return table


def precision_table(results : Mapping[ResultKey, ResultEntry], experiment : int) -> pd.DataFrame:
    rows = []
    for key in sorted(k for k in results if k[0] == experiment):
        rep = results[key].report
        rows.append({"variant": key[1], "classifier": key[2],
                     "precision": format_rate(rep.precision), "tpr": format_rate(rep.tpr)})
    return pd.DataFrame(rows, columns=["variant", "classifier", "precision", "tpr"])


def confusion_table(results : Mapping[ResultKey, ResultEntry], experiment : int) -> pd.DataFrame:
    """Counts a, b, c, d of every combination (non-seizure is the positive class)."""
    rows = []
    for key in sorted(k for k in results if k[0] == experiment):
        cm = results[key].confusion
        row = {"variant": key[1], "classifier": key[2]}
        for name in "abcd":
            row[name] = str(getattr(cm, name)) if cm is not None else NA
        rows.append(row)
    return pd.DataFrame(rows, columns=["variant", "classifier", "a", "b", "c", "d"])


def perfect_summary(results : Mapping[ResultKey, ResultEntry]) -> pd.DataFrame:
    """TPR/TNR/FPR/FNR of every combination that reached 100% accuracy."""
    rows = []
    for key in sorted(results):
        rep = results[key].report
        if rep.acc is not None and rep.acc == 1.0:
            rows.append({"experiment": key[0], "variant": key[1], "classifier": key[2],
                         "tpr": format_rate(rep.tpr), "tnr": format_rate(rep.tnr),
                         "fpr": format_rate(rep.fpr), "fnr": format_rate(rep.fnr)})
    return pd.DataFrame(rows, columns=["experiment", "variant", "classifier",
                                       "tpr", "tnr", "fpr", "fnr"])


def report_table(results : Mapping[ResultKey, ResultEntry]) -> Tuple[str, pd.DataFrame]:
    """Aligned-text report plus the full-precision frame behind it."""
    if not results:
        raise DataError("no results to report")
    parts = []
    for exp in sorted({k[0] for k in results}):
        parts.append("Experiment {}: test-set accuracy (%)".format(exp))
        parts.append(accuracy_table(results, exp).to_string())
        parts.append("")
        parts.append("Experiment {}: precision and TPR".format(exp))
        parts.append(precision_table(results, exp).to_string(index=False))
        parts.append("")
        parts.append("Experiment {}: confusion matrices".format(exp))
        parts.append(confusion_table(results, exp).to_string(index=False))
        parts.append("")
    summary = perfect_summary(results)
    parts.append("Combinations reaching 100% accuracy")
    parts.append(summary.to_string(index=False) if len(summary) else "(none)")
    parts.append("")
    parts.append("{} = no answer".format(NA))
    return "\n".join(parts) + "\n", results_frame(results)
