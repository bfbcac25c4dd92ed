"""Bonn EEG loading, experiment assembly, train/test splitting and synthetic data.

The public Bonn distribution ships five directories (Z, O, N, F, S) of 100
text files each, one signed integer sample per line. Inside llsp the sets
are called A-E; the directory and filename prefix for each set come from
the run configuration.
"""
import logging
import re
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt
from pydantic import field_validator, model_validator

from .errors import DataError, SelectionError
from .selection import SET_SIZE, SetBlock, SetTag, format_selection, parse_selection
from .signal_model import BONN_SAMPLE_RATE, TimeGrid, eval_polynomial
from .util.lang import duplicates
from .util.string import index_ranges, plural

_logger = logging.getLogger(__name__)

#: Samples per Bonn segment.
BONN_SEGMENT_LENGTH = 4097

#: Set tag -> directory / filename prefix of the public distribution.
BONN_SET_DIRS = {"A": "Z", "B": "O", "C": "N", "D": "F", "E": "S"}
BONN_FILE_PREFIXES = {"A": "Z", "B": "O", "C": "N", "D": "F", "E": "S"}


class Label(str, Enum):
    non_seizure = "non-seizure"
    seizure     = "seizure"

    @property
    def code(self) -> int:
        return 0 if self == Label.non_seizure else 1

    @classmethod
    def from_code(cls, code : int) -> "Label":
        return cls.seizure if int(code) == 1 else cls.non_seizure

    @classmethod
    def of_set(cls, tag) -> "Label":
        """Set E is ictal, every other set is not."""
        return cls.seizure if SetTag(tag) == SetTag.E else cls.non_seizure


class Segment(BaseModel):
    """One EEG window with its provenance."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples:      np.ndarray
    sample_rate:  PositiveFloat = BONN_SAMPLE_RATE
    set_tag:      SetTag
    index_in_set: PositiveInt
    label:        Label
    source:       str = "bonn"

    @field_validator("samples")
    @classmethod
    def _finite(cls, v):
        v = np.array(v, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("segment has no samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("segment has non-finite samples")
        v.setflags(write=False)
        return v

    @property
    @model_validator(mode="after")
    def _label_matches_set(self):
        if self.label != Label.of_set(self.set_tag):
            raise ValueError("segment {} of set {} cannot be labelled {}".format(
                self.segment_id, self.set_tag.value, self.label.value))
        return self

    @property
    def segment_id(self) -> str:
        return "{}{:03d}".format(self.set_tag.value, self.index_in_set)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(n_samples=self.samples.size, sample_rate=self.sample_rate)


# ---- experiments ----

BUILTIN_SELECTIONS = {
    1: "A[1-25] B[26-50] C[51-75] D[76-100] vs E[1-100]",
    2: "C[1-33] A[34-66] D[67-100] vs E[1-100]",
    3: "B[1-100] vs E[1-100]",
    4: "A[1-100] vs E[1-100]",
}

#: (train, test) counts; experiment 1 uses 178/22 instead of 180/20.
BUILTIN_COUNTS = {1: (178, 22), 2: (180, 20), 3: (180, 20), 4: (180, 20)}


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id:          int = Field(ge=0, le=4)
    nonseizure:  Tuple[SetBlock, ...]
    seizure:     Tuple[SetBlock, ...]
    train_count: PositiveInt
    test_count:  PositiveInt

    @model_validator(mode="after")
    def _check(self):
        n0 = sum(len(b) for b in self.nonseizure)
        n1 = sum(len(b) for b in self.seizure)
        if n0 != n1:
            raise ValueError("unbalanced classes: {} non-seizure vs {} seizure".format(n0, n1))
        if self.train_count + self.test_count != n0 + n1:
            raise ValueError("train {} + test {} != {} segments".format(
                self.train_count, self.test_count, n0 + n1))
        return self

    @property
    def class_size(self) -> int:
        return sum(len(b) for b in self.nonseizure)

    @property
    def selection(self) -> str:
        return format_selection(self.nonseizure, self.seizure)

    @property
    def set_tags(self) -> List[SetTag]:
        return sorted({b.tag for b in self.nonseizure + self.seizure}, key=lambda t: t.value)

    @classmethod
    def parse(cls, text : str, id : int = 0, train_fraction : float = 0.9,
              counts : Optional[Tuple[int, int]] = None) -> "ExperimentSpec":
        nonseizure, seizure = parse_selection(text)
        total = 2 * sum(len(b) for b in nonseizure)
        if counts is None:
            train = int(round(total * train_fraction))
            counts = (train, total - train)
        try:
            return cls(id=id, nonseizure=tuple(nonseizure), seizure=tuple(seizure),
                       train_count=counts[0], test_count=counts[1])
        except ValueError as err:
            raise SelectionError("selection '{}': {}".format(text, err))


def experiment(id : int) -> ExperimentSpec:
    """One of the four built-in balanced experiments."""
    if id not in BUILTIN_SELECTIONS:
        raise SelectionError("unknown experiment {}; choose 1-4".format(id))
    return ExperimentSpec.parse(BUILTIN_SELECTIONS[id], id=id, counts=BUILTIN_COUNTS[id])


# ---- Bonn files ----

def _index_files(directory : Path, prefix : Optional[str]) -> Dict[int, Path]:
    pattern = re.compile(r"^{}(\d{{3}})\.txt$".format(re.escape(prefix) if prefix else "[A-Za-z]*"),
                         re.IGNORECASE)
    found = {}
    for path in sorted(directory.iterdir()):
        match = pattern.match(path.name)
        if match:
            found[int(match.group(1))] = path
    return found


def read_bonn_file(path : Path) -> np.ndarray:
    """Integer samples of one Bonn text file; blank lines are ignored."""
    try:
        frame = pd.read_csv(path, header=None, names=["v"], dtype=str, sep="\t",
                            skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DataError("{}: file is empty".format(path))
    lines = frame["v"].fillna("").str.strip()
    nonblank = lines != ""
    bad = nonblank & ~lines.str.fullmatch(r"[+-]?\d+")
    if bad.any():
        lineno = int(bad.idxmax()) + 1
        raise DataError("{}:{}: not an integer sample: {!r}".format(path, lineno, lines[bad].iloc[0]))
    return lines[nonblank].astype(np.int64).to_numpy().astype(float)


def load_bonn_set(directory, set_tag, prefix : Optional[str] = None,
                  expected_length : Optional[int] = BONN_SEGMENT_LENGTH,
                  strict : bool = True, set_size : int = SET_SIZE) -> List[Segment]:
    """Load one set directory as ``set_size`` segments ordered by file index.

    With ``strict=False`` a segment of the wrong length is accepted with a
    warning (public mirrors mix 4096 and 4097 samples).
    """
    directory = Path(directory)
    set_tag = SetTag(set_tag)
    if not directory.is_dir():
        raise DataError("set {}: no directory {}".format(set_tag.value, directory))

    files = _index_files(directory, prefix)
    missing = [i for i in range(1, set_size + 1) if i not in files]
    if missing:
        raise DataError("set {} in {}: missing file {} {}".format(
            set_tag.value, directory, plural(len(missing), "index", "indices", show_n=False),
            index_ranges(missing)))
    extra = sorted(i for i in files if i > set_size)
    if extra:
        _logger.warning("set %s: ignoring files beyond index %d: %s",
                        set_tag.value, set_size, index_ranges(extra))

    label = Label.of_set(set_tag)
    segments = []
    for index in range(1, set_size + 1):
        samples = read_bonn_file(files[index])
        if expected_length is not None and samples.size != expected_length:
            msg = "{}: {} samples, expected {}".format(files[index], samples.size, expected_length)
            if strict:
                raise DataError(msg)
            _logger.warning("%s (accepted)", msg)
        segments.append(Segment(samples=samples, set_tag=set_tag, index_in_set=index, label=label))
    _logger.info("loaded set %s: %s from %s", set_tag.value, plural(len(segments), "segment"), directory)
    return segments


def load_bonn_sets(root, tags : Sequence, set_dirs : Mapping[str, str] = BONN_SET_DIRS,
                   prefixes : Mapping[str, str] = BONN_FILE_PREFIXES,
                   **kwargs) -> Dict[SetTag, List[Segment]]:
    root = Path(root)
    sets = {}
    for tag in tags:
        tag = SetTag(tag)
        sets[tag] = load_bonn_set(root / set_dirs.get(tag.value, tag.value), tag,
                                  prefix=prefixes.get(tag.value), **kwargs)
    return sets


def write_bonn_set(segments : Sequence[Segment], directory, prefix : str) -> List[Path]:
    """Write segments as Bonn text files (samples rounded to integers)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for seg in segments:
        path = directory / "{}{:03d}.txt".format(prefix, seg.index_in_set)
        pd.Series(np.rint(seg.samples).astype(np.int64)).to_csv(path, header=False, index=False)
        paths.append(path)
    return paths


# ---- assembly and splitting ----

def assemble_experiment(sets : Mapping, spec : ExperimentSpec) -> Tuple[List[Segment], List[Label]]:
    """Pick the experiment's segments: non-seizure blocks first, then seizure."""
    by_tag = {SetTag(tag): {seg.index_in_set: seg for seg in segs} for tag, segs in sets.items()}

    taken = []
    segments, labels = [], []
    for blocks, label in ((spec.nonseizure, Label.non_seizure), (spec.seizure, Label.seizure)):
        for block in blocks:
            if Label.of_set(block.tag) != label:
                raise SelectionError("set {} holds {} segments and cannot be on the {} side".format(
                    block.tag.value, Label.of_set(block.tag).value, label.value))
        for block in blocks:
            if block.tag not in by_tag:
                raise DataError("experiment {} needs set {}, which is not loaded".format(
                    spec.id, block.tag.value))
            available = by_tag[block.tag]
            overflow = [i for i in block.indices if i not in available]
            if overflow:
                raise SelectionError("{} overflows set {} (no {} {})".format(
                    block, block.tag.value,
                    plural(len(overflow), "segment", show_n=False), index_ranges(overflow)))
            for i in block.indices:
                taken.append((block.tag.value, i))
                segments.append(available[i])
                labels.append(label)

    dup = duplicates(taken)
    if dup:
        raise SelectionError("experiment {} selects {} twice".format(
            spec.id, ", ".join("{}{}".format(t, i) for t, i in dup)))
    return segments, labels


class SplitMode(str, Enum):
    stratified_random  = "stratified-random"
    deterministic_tail = "deterministic-tail"


def _allocate(total : int, sizes : Sequence[int]) -> List[int]:
    """Split ``total`` proportionally to ``sizes``; leftovers go to earlier classes."""
    n = sum(sizes)
    if n == 0:
        if total:
            raise SelectionError("cannot place {} segments in empty classes".format(total))
        return [0] * len(sizes)
    quotas = [total * s / n for s in sizes]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[:total - sum(counts)]:
        counts[i] += 1
    return counts


def split_indices(labels : Sequence, train_fraction : float = 0.9, seed : int = 0,
                  exact_counts : Optional[Tuple[int, int]] = None,
                  mode : SplitMode = SplitMode.stratified_random) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified train/test split of positions ``0..len(labels)-1``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1), got {}".format(train_fraction))
    labels = [Label(l) for l in labels]
    n = len(labels)
    if exact_counts is not None:
        n_train, n_test = exact_counts
        if n_train < 0 or n_test < 0 or n_train + n_test > n:
            raise SelectionError("split {}/{} exceeds {}".format(n_train, n_test, plural(n, "segment")))
    else:
        n_train = int(round(n * train_fraction))
        n_test = n - n_train

    classes = [c for c in Label if c in labels]
    members = [np.array([i for i, l in enumerate(labels) if l == c], dtype=int) for c in classes]
    sizes = [m.size for m in members]
    test_counts = _allocate(n_test, sizes)
    train_counts = _allocate(n_train, [s - k for s, k in zip(sizes, test_counts)])

    mode = SplitMode(mode)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx, k_test, k_train in zip(members, test_counts, train_counts):
        if k_test + k_train > idx.size:
            raise SelectionError("split needs {} segments of a class with {}".format(
                k_test + k_train, idx.size))
        if mode == SplitMode.deterministic_tail:
            test.append(idx[idx.size - k_test:])
            train.append(idx[:k_train])
        else:
            order = rng.permutation(idx)
            test.append(order[:k_test])
            train.append(order[k_test:k_test + k_train])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_train_test(segments : Sequence, labels : Sequence, train_fraction : float = 0.9,
                     seed : int = 0, exact_counts : Optional[Tuple[int, int]] = None,
                     mode : SplitMode = SplitMode.stratified_random):
    """Returns ``((train_items, train_labels), (test_items, test_labels))``."""
    if len(segments) != len(labels):
        raise ValueError("{} items but {} labels".format(len(segments), len(labels)))
    train_idx, test_idx = split_indices(labels, train_fraction, seed, exact_counts, mode)
    take = lambda idx: ([segments[i] for i in idx], [Label(labels[i]) for i in idx])
    return take(train_idx), take(test_idx)


# ---- synthetic data ----

class ClassSpec(BaseModel):
    """A synthetic class: ``A(u) sin(2 pi f t + phase) + noise``.

    ``amplitude`` holds polynomial coefficients in normalized time u in [0, 1].
    """
    model_config = ConfigDict(frozen=True)

    label:     Label
    frequency: NonNegativeFloat
    amplitude: Tuple[float, ...] = (1.0,)
    noise:     NonNegativeFloat = 0.0
    phase:     float = 0.0
    set_tag:   Optional[SetTag] = None

    @model_validator(mode="after")
    def _label_matches_set(self):
        if self.set_tag is not None and Label.of_set(self.set_tag) != self.label:
            raise ValueError("a {} class cannot be tagged as set {}".format(
                self.label.value, self.set_tag.value))
        return self

    @property
    def tag(self) -> SetTag:
        if self.set_tag is not None:
            return self.set_tag
        return SetTag.E if self.label == Label.seizure else SetTag.A


def generate_synthetic(classes : Sequence[ClassSpec], count : int, length : int,
                       sample_rate : float = BONN_SAMPLE_RATE, seed : int = 0) -> List[Segment]:
    """``count`` reproducible segments per class, classes in the given order."""
    if count < 1:
        raise ValueError("count must be >= 1, got {}".format(count))
    grid = TimeGrid(n_samples=length, sample_rate=sample_rate)
    t, u = grid.t, grid.normalized()
    segments = []
    for ci, cls in enumerate(classes):
        envelope = eval_polynomial(cls.amplitude, u)
        clean = envelope * np.sin(2.0 * np.pi * cls.frequency * t + cls.phase)
        for k in range(1, count + 1):
            rng = np.random.default_rng([seed, ci, k])
            samples = clean + cls.noise * rng.standard_normal(length)
            segments.append(Segment(samples=samples, sample_rate=sample_rate, set_tag=cls.tag,
                                    index_in_set=k, label=cls.label, source="synthetic"))
    return segments
