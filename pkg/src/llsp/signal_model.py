"""Amplitude functions and wave-model design matrices.

The four wave models share one shape, an amplitude function times a carrier
``sin(2 pi omega t + tau)``, optionally plus a second amplitude function that
shifts the wave vertically:

    llsp1:  P_m(x, t) sin(...)
    llsp2:  P_m(x1, t) sin(...) + P_m(x2, t)
    llsp3:  S_m(x, theta, t) sin(...)
    llsp4:  S_m(x1, theta, t) sin(...) + S_m(x2, theta, t)

``P_m`` is a polynomial of degree m and ``S_m`` a spline of degree m written
in the truncated power basis over n subintervals. The carrier uses physical
time in seconds; the amplitude basis uses time mapped affinely onto [0, 1],
and knots live on that normalized axis.
"""
import math
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, model_validator

from .errors import DataError
from .lls_solver import DesignMatrix, RankClass
from .util.lang import memoized

#: Sampling frequency of the Bonn recordings, Hz.
BONN_SAMPLE_RATE = 173.61

#: Amplitude degrees used for the published feature dimensions.
DEFAULT_POLYNOMIAL_DEGREE = 48
DEFAULT_SPLINE_DEGREE = 4
DEFAULT_SPLINE_INTERVALS = 12


class LlspVariant(str, Enum):
    llsp1 = "llsp1"
    llsp2 = "llsp2"
    llsp3 = "llsp3"
    llsp4 = "llsp4"

    @property
    def has_shift(self) -> bool:
        return self in (LlspVariant.llsp2, LlspVariant.llsp4)

    @property
    def amplitude_kind(self) -> "AmplitudeKind":
        if self in (LlspVariant.llsp1, LlspVariant.llsp2):
            return AmplitudeKind.polynomial
        return AmplitudeKind.spline


class AmplitudeKind(str, Enum):
    polynomial = "polynomial"
    spline     = "spline"


class KnotVector(BaseModel):
    """Fixed interior knots of a spline over ``[t_min, t_max]``.

    ``n`` subintervals means ``n - 1`` knots; ``n = 1`` is the polynomial case.
    """
    model_config = ConfigDict(frozen=True)

    knots: Tuple[float, ...] = ()
    n:     PositiveInt       = 1
    t_min: float             = 0.0
    t_max: float             = 1.0

    @model_validator(mode="after")
    def _check(self):
        if not self.t_min < self.t_max:
            raise ValueError("empty knot span [{}, {}]".format(self.t_min, self.t_max))
        if len(self.knots) != self.n - 1:
            raise ValueError("{} subintervals need {} knots, got {}".format(
                self.n, self.n - 1, len(self.knots)))
        k = np.asarray(self.knots, dtype=float)
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing: {}".format(self.knots))
        if k.size and (k[0] <= self.t_min or k[-1] >= self.t_max):
            raise ValueError("knots must lie strictly inside ({}, {})".format(self.t_min, self.t_max))
        return self

    @classmethod
    def equidistant(cls, n : int, t_min : float = 0.0, t_max : float = 1.0) -> "KnotVector":
        """Knots at ``t_min + k/n (t_max - t_min)`` for k = 1..n-1."""
        span = t_max - t_min
        return cls(knots=tuple(t_min + span * k / n for k in range(1, n)),
                   n=n, t_min=t_min, t_max=t_max)


class AmplitudeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:   AmplitudeKind
    degree: PositiveInt
    knots:  KnotVector = KnotVector()

    @model_validator(mode="after")
    def _check(self):
        if self.kind == AmplitudeKind.polynomial and self.knots.n != 1:
            raise ValueError("a polynomial amplitude has no knots")
        return self

    @property
    def parameter_count(self) -> int:
        # x0 plus m coefficients per subinterval; n = 1 gives m + 1.
        return self.degree * self.knots.n + 1

    @classmethod
    def polynomial(cls, m : int = DEFAULT_POLYNOMIAL_DEGREE) -> "AmplitudeSpec":
        return cls(kind=AmplitudeKind.polynomial, degree=m)

    @classmethod
    def spline(cls, m : int = DEFAULT_SPLINE_DEGREE,
               n : int = DEFAULT_SPLINE_INTERVALS) -> "AmplitudeSpec":
        return cls(kind=AmplitudeKind.spline, degree=m, knots=KnotVector.equidistant(n))


def default_amplitude(variant : LlspVariant,
                      polynomial_degree : int = DEFAULT_POLYNOMIAL_DEGREE,
                      spline_degree : int = DEFAULT_SPLINE_DEGREE,
                      spline_intervals : int = DEFAULT_SPLINE_INTERVALS) -> AmplitudeSpec:
    variant = LlspVariant(variant)
    if variant.amplitude_kind == AmplitudeKind.polynomial:
        return AmplitudeSpec.polynomial(polynomial_degree)
    return AmplitudeSpec.spline(spline_degree, spline_intervals)


class TimeGrid(BaseModel):
    """Uniform sample times ``start + i / sample_rate``, i = 0..N-1."""
    model_config = ConfigDict(frozen=True)

    n_samples:   PositiveInt
    sample_rate: PositiveFloat = BONN_SAMPLE_RATE
    start:       float = 0.0

    @property
    def t(self) -> np.ndarray:
        return _seconds(self.n_samples, self.sample_rate, self.start)

    def normalized(self) -> np.ndarray:
        """Sample times mapped onto [0, 1]: ``i / (N - 1)``."""
        return _normalized(self.n_samples)


@memoized
def _seconds(n_samples, sample_rate, start):
    return start + np.arange(n_samples, dtype=float) / sample_rate


@memoized
def _normalized(n_samples):
    if n_samples == 1:
        return np.zeros(1)
    return np.arange(n_samples, dtype=float) / (n_samples - 1)


class WaveModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant:   LlspVariant
    amplitude: AmplitudeSpec
    omega:     float = 0.0  # Hz
    tau:       float = 0.0  # radians

    @model_validator(mode="after")
    def _check(self):
        if self.amplitude.kind != self.variant.amplitude_kind:
            raise ValueError("{} needs a {} amplitude, got {}".format(
                self.variant.value, self.variant.amplitude_kind.value, self.amplitude.kind.value))
        return self

    @property
    def parameter_count(self) -> int:
        return self.amplitude.parameter_count * (2 if self.variant.has_shift else 1)

    @property
    def rank_class(self) -> RankClass:
        return RankClass.possibly_deficient if self.variant.has_shift else RankClass.full_rank


def truncated_power(t, theta, j : int):
    """``max(0, t - theta) ** j``"""
    if j < 1:
        raise ValueError("truncated power order must be >= 1, got {}".format(j))
    out = np.maximum(np.subtract(t, theta), 0.0) ** j
    return float(out) if np.ndim(out) == 0 else out


def eval_polynomial(x, t, degree : Optional[int] = None):
    """Evaluate ``x0 + sum_j x_j t^j`` by nested multiplication."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("polynomial needs at least one coefficient")
    if degree is not None and x.size != degree + 1:
        raise ValueError("degree {} polynomial needs {} coefficients, got {}".format(
            degree, degree + 1, x.size))
    t = np.asarray(t, dtype=float)
    acc = np.full(t.shape, x[-1])
    for c in x[-2::-1]:
        acc = acc * t + c
    return float(acc) if acc.ndim == 0 else acc


def eval_spline(x, spec : AmplitudeSpec, t):
    """Evaluate the truncated-power spline ``S_m(x, theta, t)``.

    Coefficients are ordered ``x0, x11..x1m, x21..x2m, ..., xn1..xnm`` where
    block ``l >= 2`` multiplies powers of ``(t - theta_{l-1})_+``.
    """
    if spec.kind != AmplitudeKind.spline:
        raise ValueError("eval_spline needs a spline amplitude, got {}".format(spec.kind.value))
    x = np.asarray(x, dtype=float).ravel()
    m = spec.degree
    if x.size != spec.parameter_count:
        raise ValueError("spline with m={}, n={} needs {} coefficients, got {}".format(
            m, spec.knots.n, spec.parameter_count, x.size))
    t = np.asarray(t, dtype=float)
    if np.any(t < spec.knots.t_min) or np.any(t > spec.knots.t_max):
        raise ValueError("t outside the spline span [{}, {}]".format(spec.knots.t_min, spec.knots.t_max))

    value = np.asarray(eval_polynomial(x[:m + 1], t), dtype=float)
    for l, theta in enumerate(spec.knots.knots, start=1):
        block = x[1 + l * m: 1 + (l + 1) * m]
        for j, c in enumerate(block, start=1):
            value = value + c * truncated_power(t, theta, j)
    return float(value) if value.ndim == 0 else value


def amplitude_value(amp : AmplitudeSpec, x, u):
    if amp.kind == AmplitudeKind.polynomial:
        return eval_polynomial(x, u, amp.degree)
    return eval_spline(x, amp, u)


def amplitude_basis(amp : AmplitudeSpec, u) -> np.ndarray:
    """Columns ``1, u, .., u^m`` then ``(u - theta_l)_+^j`` per knot."""
    u = np.asarray(u, dtype=float)
    m = amp.degree
    cols = np.empty((u.size, amp.parameter_count))
    cols[:, 0] = 1.0
    for j in range(1, m + 1):
        cols[:, j] = cols[:, j - 1] * u
    for l, theta in enumerate(amp.knots.knots, start=1):
        s = np.maximum(u - theta, 0.0)
        base = 1 + l * m
        cols[:, base] = s
        for j in range(2, m + 1):
            cols[:, base + j - 1] = cols[:, base + j - 2] * s
    return cols


@memoized
def _normalized_basis(amp, n_samples):
    return amplitude_basis(amp, _normalized(n_samples))


def carrier(spec : WaveModelSpec, grid : TimeGrid) -> np.ndarray:
    """``sin(2 pi omega t_i + tau)`` at the sample times."""
    return np.sin(2.0 * math.pi * spec.omega * grid.t + spec.tau)


def build_design_matrix(spec : WaveModelSpec, grid : TimeGrid) -> DesignMatrix:
    p = spec.parameter_count
    if p > grid.n_samples:
        raise DataError("{} parameters exceed {} samples for {}".format(
            p, grid.n_samples, spec.variant.value))
    basis = _normalized_basis(spec.amplitude, grid.n_samples)
    alpha = carrier(spec, grid)
    data = alpha[:, None] * basis
    if not spec.variant.has_shift:
        return DesignMatrix(data=data, rank_class=spec.rank_class)
    return DesignMatrix(data=np.hstack([data, basis]), rank_class=spec.rank_class,
                        base_columns=basis.shape[1])


def evaluate_wave(spec : WaveModelSpec, x, grid : TimeGrid) -> np.ndarray:
    """Model value at every sample time, computed from the amplitude functions."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.parameter_count:
        raise ValueError("{} needs {} parameters, got {}".format(
            spec.variant.value, spec.parameter_count, x.size))
    u = grid.normalized()
    k = spec.amplitude.parameter_count
    wave = np.asarray(amplitude_value(spec.amplitude, x[:k], u)) * carrier(spec, grid)
    if spec.variant.has_shift:
        wave = wave + np.asarray(amplitude_value(spec.amplitude, x[k:], u))
    return wave
