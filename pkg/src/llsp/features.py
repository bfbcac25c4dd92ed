"""Grid-search feature extraction.

For every (omega, tau) point of a grid the wave model of a variant is fitted
to a segment by linear least squares. The grid point with the smallest
residual gives the segment's feature vector::

    [objective, omega, tau, x_0, ..., x_{p-1}]

so 52 values for llsp1/llsp3 and 101 for llsp2/llsp4 with the default
amplitude degrees.
"""
import functools
import logging
import math
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, PositiveFloat, model_validator
from tqdm import tqdm

from .data_ingest import Label, Segment
from .errors import DataError, ExtractionError, NumericError
from .lls_solver import LlsSolution, solve
from .selection import SetTag
from .signal_model import (AmplitudeSpec, LlspVariant, WaveModelSpec, build_design_matrix,
                           default_amplitude, evaluate_wave)
from .util.string import plural

_logger = logging.getLogger(__name__)

#: Slack for the last grid point to count as inside the range.
GRID_EPS = 1e-12

#: Residuals within this fraction of ||y||^2 of the best one are ties.
TIE_RTOL = 1e-12

#: Relative singular value cutoff for a grid-point fit on unit-norm columns.
FEATURE_RANK_TOL = 1e-5

#: Allowed relative gap between the stored objective and one recomputed
#: from the wave model.
RECONSTRUCTION_RTOL = 1e-8

HEADER = ["segment_id", "label", "objective", "omega", "tau"]


class GridSpec(BaseModel):
    """Frequency (Hz) and phase (radians) grid, both start-anchored."""
    model_config = ConfigDict(frozen=True)

    omega_start: float         = 0.53
    omega_end:   float         = 40.0
    omega_step:  PositiveFloat = 1.0
    tau_start:   float         = 0.0
    tau_end:     float         = math.pi
    tau_step:    PositiveFloat = math.pi / 4

    @model_validator(mode="after")
    def _check(self):
        if self.omega_start > self.omega_end:
            raise ValueError("omega_start {} > omega_end {}".format(self.omega_start, self.omega_end))
        if self.tau_start > self.tau_end:
            raise ValueError("tau_start {} > tau_end {}".format(self.tau_start, self.tau_end))
        return self

    @staticmethod
    def _axis(start, end, step) -> np.ndarray:
        values = []
        k = 0
        while start + k * step <= end + GRID_EPS:
            values.append(start + k * step)
            k += 1
        return np.array(values)

    def omegas(self) -> np.ndarray:
        return self._axis(self.omega_start, self.omega_end, self.omega_step)

    def taus(self) -> np.ndarray:
        return self._axis(self.tau_start, self.tau_end, self.tau_step)

    def points(self) -> List[Tuple[float, float]]:
        """All (omega, tau) pairs, omega-major."""
        return [(float(w), float(t)) for w in self.omegas() for t in self.taus()]

    @property
    def size(self) -> int:
        return len(self.omegas()) * len(self.taus())


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    segment_id:       str
    set_tag:          Optional[SetTag] = None
    label:            Label
    variant:          LlspVariant
    objective:        NonNegativeFloat
    omega:            float
    tau:              float
    amplitude_params: Tuple[float, ...]

    @property
    def values(self) -> np.ndarray:
        return np.array((self.objective, self.omega, self.tau) + self.amplitude_params)

    def __len__(self):
        return 3 + len(self.amplitude_params)


def feature_names(n_params : int) -> List[str]:
    return ["objective", "omega", "tau"] + ["p{}".format(i) for i in range(n_params)]


def fit_point(segment : Segment, spec : WaveModelSpec,
              rank_tol : float = FEATURE_RANK_TOL) -> LlsSolution:
    """Least squares fit of one wave model to a segment.

    Columns are scaled to unit norm and singular values below
    ``rank_tol * sigma_max`` of the scaled matrix are dropped, which keeps
    the monomial coefficients of high-degree amplitudes bounded.
    """
    A = build_design_matrix(spec, segment.time_grid())
    return solve(A, segment.samples, rank_tol=rank_tol, scale_columns=True)


def wave_spec(feature : FeatureVector, amp : Optional[AmplitudeSpec] = None) -> WaveModelSpec:
    """The wave model a feature vector was fitted with."""
    if amp is None:
        amp = default_amplitude(feature.variant)
    return WaveModelSpec(variant=feature.variant, amplitude=amp,
                         omega=feature.omega, tau=feature.tau)


def reconstruct(segment : Segment, feature : FeatureVector,
                amp : Optional[AmplitudeSpec] = None) -> np.ndarray:
    """Model values at the segment's sample times."""
    return evaluate_wave(wave_spec(feature, amp), feature.amplitude_params, segment.time_grid())


def _check_objective(segment, feature, amp):
    r = segment.samples - reconstruct(segment, feature, amp)
    again = float(r @ r)
    scale = max(feature.objective, np.finfo(float).tiny)
    if abs(again - feature.objective) > RECONSTRUCTION_RTOL * scale:
        _logger.warning("%s %s: stored objective %.17g, reconstructed %.17g",
                        segment.segment_id, feature.variant.value, feature.objective, again)


def extract_features(segment : Segment, variant : LlspVariant, grid : GridSpec = GridSpec(),
                     amp : Optional[AmplitudeSpec] = None,
                     rank_tol : float = FEATURE_RANK_TOL) -> FeatureVector:
    """Fit every grid point and keep the one with the smallest residual.

    Ties (residuals within ``TIE_RTOL * ||y||^2`` of the minimum) go to the
    first point in omega-major, tau-minor order. The winning objective is
    recomputed from the wave model and a mismatch is logged as a warning.
    """
    variant = LlspVariant(variant)
    if amp is None:
        amp = default_amplitude(variant)
    y = segment.samples

    points = grid.points()
    residuals = np.empty(len(points))
    solutions = []
    for k, (omega, tau) in enumerate(points):
        try:
            spec = WaveModelSpec(variant=variant, amplitude=amp, omega=omega, tau=tau)
            sol = fit_point(segment, spec, rank_tol)
        except NumericError as err:
            raise ExtractionError("segment {} at omega={} tau={}: {}".format(
                segment.segment_id, omega, tau, err), segment.segment_id, omega, tau) from err
        except DataError as err:
            raise DataError("segment {}: {}".format(segment.segment_id, err)) from err
        residuals[k] = sol.residual_ssq
        solutions.append(sol)

    tol = TIE_RTOL * float(y @ y)
    best = int(np.flatnonzero(residuals <= residuals.min() + tol)[0])
    omega, tau = points[best]
    sol = solutions[best]
    _logger.debug("%s %s: omega=%g tau=%g objective=%g (%s, rank %d)", segment.segment_id,
                  variant.value, omega, tau, sol.residual_ssq, sol.method.value,
                  sol.effective_rank)
    feature = FeatureVector(segment_id=segment.segment_id, set_tag=segment.set_tag,
                            label=segment.label, variant=variant,
                            objective=max(sol.residual_ssq, 0.0), omega=omega, tau=tau,
                            amplitude_params=tuple(float(v) for v in sol.x))
    _check_objective(segment, feature, amp)
    return feature


def _extract_one(segment, variant, grid, amp, rank_tol):
    return extract_features(segment, variant, grid, amp, rank_tol)


def extract_dataset(segments : Sequence[Segment], variant : LlspVariant,
                    grid : GridSpec = GridSpec(), amp : Optional[AmplitudeSpec] = None,
                    workers : int = 1, progress : bool = False,
                    rank_tol : float = FEATURE_RANK_TOL) -> List[FeatureVector]:
    """Feature vectors of all segments, in input order, for any worker count."""
    if len(segments) == 0:
        raise DataError("no segments to extract features from")
    variant = LlspVariant(variant)
    if amp is None:
        amp = default_amplitude(variant)
    job = functools.partial(_extract_one, variant=variant, grid=grid, amp=amp, rank_tol=rank_tol)
    _logger.info("extracting %s features from %s on %d grid points with %s",
                 variant.value, plural(len(segments), "segment"), grid.size,
                 plural(max(workers, 1), "worker"))

    bar = functools.partial(tqdm, total=len(segments), desc=variant.value, disable=not progress)
    if workers <= 1:
        return [job(seg) for seg in bar(segments)]
    with Pool(workers) as pool:
        return list(bar(pool.imap(job, segments, chunksize=1)))


def mean_frequency(features : Sequence[FeatureVector],
                   subset : Optional[Callable[[str], bool]] = None) -> float:
    """Mean omega over the features whose segment id satisfies ``subset``."""
    chosen = [f.omega for f in features if subset is None or subset(f.segment_id)]
    if not chosen:
        raise DataError("mean frequency of an empty selection")
    return float(np.mean(chosen))


def mean_frequency_table(features : Sequence[FeatureVector]) -> Dict[str, float]:
    """Mean omega per set tag, in tag order."""
    tags = sorted({f.set_tag.value for f in features if f.set_tag is not None})
    return {tag: mean_frequency([f for f in features if f.set_tag is not None
                                 and f.set_tag.value == tag]) for tag in tags}


# ---- CSV ----

def features_frame(features : Sequence[FeatureVector]) -> pd.DataFrame:
    n_params = {len(f.amplitude_params) for f in features}
    if len(n_params) != 1:
        raise DataError("feature vectors of mixed lengths: {}".format(sorted(n_params)))
    names = feature_names(n_params.pop())
    frame = pd.DataFrame([f.values for f in features], columns=names)
    frame.insert(0, "label", [f.label.value for f in features])
    frame.insert(0, "segment_id", [f.segment_id for f in features])
    return frame


def raw_frame(segments : Sequence[Segment]) -> pd.DataFrame:
    """Passthrough table of the samples themselves."""
    lengths = {s.samples.size for s in segments}
    if len(lengths) != 1:
        raise DataError("raw passthrough needs equal segment lengths, got {}".format(sorted(lengths)))
    frame = pd.DataFrame(np.vstack([s.samples for s in segments]),
                         columns=["x{}".format(i) for i in range(lengths.pop())])
    frame.insert(0, "label", [s.label.value for s in segments])
    frame.insert(0, "segment_id", [s.segment_id for s in segments])
    return frame


def fit_curve_frame(segment : Segment, feature : FeatureVector,
                    amp : Optional[AmplitudeSpec] = None) -> pd.DataFrame:
    """Samples next to the fitted wave, one row per sample."""
    if feature.segment_id != segment.segment_id:
        raise DataError("feature of {} does not belong to segment {}".format(
            feature.segment_id, segment.segment_id))
    grid = segment.time_grid()
    return pd.DataFrame({
        "segment_id": segment.segment_id,
        "sample": np.arange(grid.n_samples),
        "t": grid.t,
        "signal": segment.samples,
        "fit": reconstruct(segment, feature, amp),
    })


def write_table(frame : pd.DataFrame, path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def write_features_csv(features : Sequence[FeatureVector], path) -> Path:
    return write_table(features_frame(features), path)


def read_feature_table(path) -> Tuple[List[str], np.ndarray, np.ndarray, List[str]]:
    """Read a feature or raw CSV.

    Returns:
        (segment_ids, labels as 0/1 codes, feature matrix, feature names)
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"segment_id": str, "label": str},
                            float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise DataError("{}: {}".format(path, err))
    if list(frame.columns[:2]) != ["segment_id", "label"] or frame.shape[1] < 3:
        raise DataError("{}: expected columns segment_id,label,<features...>, got {}".format(
            path, ",".join(frame.columns[:4])))
    try:
        labels = np.array([Label(v).code for v in frame["label"]], dtype=int)
    except ValueError as err:
        raise DataError("{}: {}".format(path, err))
    values = frame.iloc[:, 2:]
    if not all(pd.api.types.is_numeric_dtype(t) for t in values.dtypes):
        raise DataError("{}: non-numeric feature column".format(path))
    return list(frame["segment_id"]), labels, values.to_numpy(dtype=float), list(values.columns)
