import logging
import math

import numpy as np
import pytest

from llsp.data_ingest import ClassSpec, Label, generate_synthetic
from llsp.errors import DataError
from llsp.features import (TIE_RTOL, FeatureVector, GridSpec, extract_dataset, extract_features,
                           feature_names, fit_curve_frame, fit_point, mean_frequency,
                           mean_frequency_table, raw_frame, read_feature_table, reconstruct,
                           write_features_csv, write_table)
from llsp.selection import SetTag
from llsp.signal_model import (AmplitudeSpec, LlspVariant, WaveModelSpec, build_design_matrix,
                               default_amplitude, evaluate_wave)

ONE_POINT = GridSpec(omega_start=5.53, omega_end=5.53, tau_start=0.0, tau_end=0.0)
SMALL_GRID = GridSpec(omega_start=4.53, omega_end=6.53, tau_end=math.pi / 2)


def test_default_grid():
    grid = GridSpec()
    omegas, taus = grid.omegas(), grid.taus()
    assert len(omegas) == 40 and len(taus) == 5 and grid.size == 200
    assert omegas[0] == pytest.approx(0.53) and omegas[-1] == pytest.approx(39.53)
    assert taus[-1] == pytest.approx(math.pi)
    assert grid.points()[:2] == [(omegas[0], 0.0), (omegas[0], taus[1])]
    with pytest.raises(ValueError):
        GridSpec(omega_start=5.0, omega_end=1.0)


@pytest.mark.parametrize("variant,length", [("llsp1", 52), ("llsp2", 101),
                                            ("llsp3", 52), ("llsp4", 101)])
def test_feature_vector_lengths(variant, length, rng, make_segment):
    segment = make_segment(rng.standard_normal(256))
    features = extract_features(segment, variant, ONE_POINT)
    assert len(features) == length
    assert features.values.shape == (length,)
    assert features.segment_id == "A001"


def test_short_segment_names_itself(make_segment):
    with pytest.raises(DataError, match="A007"):
        extract_features(make_segment(np.ones(20), index=7), "llsp1", ONE_POINT)


def test_mirror_phases_resolve_to_first(make_segment):
    t = np.arange(300) / 173.61
    segment = make_segment(np.sin(2 * math.pi * 5.53 * t))
    grid = GridSpec(omega_start=5.53, omega_end=5.53)
    features = extract_features(segment, "llsp1", grid, AmplitudeSpec.polynomial(2))
    assert features.tau == 0.0
    assert features.objective <= 1e-12 * 300
    assert features.amplitude_params[0] == pytest.approx(1.0)


@pytest.fixture
def noisy(rng, make_segment):
    def make(index=1, tag="A"):
        t = np.arange(512) / 173.61
        y = 40.0 * np.sin(2 * math.pi * 5.53 * t + 0.3) + 50.0 * rng.standard_normal(512)
        return make_segment(y, tag=tag, index=index)
    return make


@pytest.mark.parametrize("variant", list(LlspVariant))
def test_fitted_wave_matches_its_design_matrix(variant, rng, make_segment):
    segment = make_segment(50.0 * rng.standard_normal(512))
    spec = WaveModelSpec(variant=variant, amplitude=default_amplitude(variant),
                         omega=8.53, tau=math.pi / 4)
    sol = fit_point(segment, spec)
    grid = segment.time_grid()
    wave = evaluate_wave(spec, sol.x, grid)
    design = build_design_matrix(spec, grid).data @ sol.x
    assert np.abs(design - wave).max() <= 1e-10 * np.abs(wave).max()
    assert np.abs(sol.x).max() < 1e9


@pytest.mark.parametrize("variant", list(LlspVariant))
def test_objective_is_the_smallest_grid_residual(variant, noisy):
    segment = noisy()
    features = extract_features(segment, variant, SMALL_GRID)
    amp = default_amplitude(variant)
    residuals = {(w, t): fit_point(segment, WaveModelSpec(variant=variant, amplitude=amp,
                                                          omega=w, tau=t)).residual_ssq
                 for w, t in SMALL_GRID.points()}
    y = segment.samples
    assert features.objective <= min(residuals.values()) + TIE_RTOL * float(y @ y)
    assert features.objective == residuals[(features.omega, features.tau)]


@pytest.mark.parametrize("variant", list(LlspVariant))
def test_reconstruction_reproduces_objective(variant, noisy, caplog):
    segment = noisy()
    with caplog.at_level(logging.WARNING, logger="llsp.features"):
        features = extract_features(segment, variant, SMALL_GRID)
    assert not caplog.records
    r = segment.samples - reconstruct(segment, features)
    assert float(r @ r) == pytest.approx(features.objective, rel=1e-8)


@pytest.mark.parametrize("base,shifted", [("llsp1", "llsp2"), ("llsp3", "llsp4")])
def test_shift_never_fits_worse(base, shifted, noisy, rng, make_segment):
    segments = [noisy(index=i) for i in (1, 2, 3)]
    segments.append(make_segment(rng.standard_normal(512) + np.linspace(0.0, 9.0, 512), index=4))
    for segment in segments:
        without = extract_features(segment, base, SMALL_GRID)
        with_shift = extract_features(segment, shifted, SMALL_GRID)
        assert with_shift.objective <= without.objective * (1 + 1e-9)


def test_fit_curve_frame(noisy):
    segment = noisy(index=3)
    features = extract_features(segment, "llsp3", SMALL_GRID)
    frame = fit_curve_frame(segment, features)
    assert list(frame.columns) == ["segment_id", "sample", "t", "signal", "fit"]
    assert len(frame) == 512 and set(frame["segment_id"]) == {"A003"}
    np.testing.assert_array_equal(frame["fit"], reconstruct(segment, features))
    residual = frame["signal"] - frame["fit"]
    assert float(residual @ residual) == pytest.approx(features.objective, rel=1e-8)
    with pytest.raises(DataError, match="A004"):
        fit_curve_frame(noisy(index=4), features)


@pytest.mark.slow
@pytest.mark.parametrize("variant", list(LlspVariant))
def test_planted_sinusoid_is_recovered(variant):
    planted = ClassSpec(label=Label.non_seizure, frequency=10.53, amplitude=(1.0, 0.5),
                        phase=math.pi / 4)
    segment, = generate_synthetic([planted], count=1, length=512)
    y = segment.samples
    features = extract_features(segment, variant)
    assert features.omega == pytest.approx(10.53)
    assert features.tau == pytest.approx(math.pi / 4)
    assert features.objective <= 1e-6 * float(y @ y)


@pytest.mark.slow
def test_noisy_frequency_recovery():
    planted = ClassSpec(label=Label.non_seizure, frequency=10.53, noise=0.1)
    segments = generate_synthetic([planted], count=100, length=512, seed=11)
    features = extract_dataset(segments, "llsp3")
    hits = sum(1 for f in features if f.omega == pytest.approx(10.53))
    assert hits >= 95


def test_dataset_order_independent_of_workers(rng, make_segment):
    segments = [make_segment(rng.standard_normal(128), index=i) for i in range(1, 5)]
    grid = GridSpec(omega_start=1.53, omega_end=3.53, tau_end=math.pi / 2)
    serial = extract_dataset(segments, "llsp3", grid, AmplitudeSpec.spline(2, 3))
    parallel = extract_dataset(segments, "llsp3", grid, AmplitudeSpec.spline(2, 3), workers=2)
    assert [f.segment_id for f in serial] == ["A001", "A002", "A003", "A004"]
    assert serial == parallel
    with pytest.raises(DataError):
        extract_dataset([], "llsp1")


def vector(segment_id, tag, omega, label=Label.non_seizure):
    return FeatureVector(segment_id=segment_id, set_tag=tag, label=label, variant="llsp1",
                         objective=0.5, omega=omega, tau=0.0, amplitude_params=(1.0, 2.0))


def test_mean_frequency():
    features = [vector("A001", SetTag.A, 1.53), vector("A002", SetTag.A, 3.53),
                vector("E001", SetTag.E, 20.53, Label.seizure)]
    assert mean_frequency(features) == pytest.approx((1.53 + 3.53 + 20.53) / 3)
    assert mean_frequency(features, lambda sid: sid.startswith("A")) == pytest.approx(2.53)
    assert mean_frequency_table(features) == pytest.approx({"A": 2.53, "E": 20.53})
    with pytest.raises(DataError):
        mean_frequency(features, lambda sid: False)


def test_feature_csv_keeps_every_digit(tmp_path, rng):
    features = [FeatureVector(segment_id="E{:03d}".format(i), set_tag=SetTag.E,
                              label=Label.seizure, variant="llsp3", objective=float(rng.random()),
                              omega=0.53 + i, tau=math.pi / 4,
                              amplitude_params=tuple(rng.standard_normal(4)))
                for i in range(1, 4)]
    path = write_features_csv(features, tmp_path / "exp4_llsp3.csv")
    assert path.read_text().splitlines()[0] == \
        "segment_id,label,objective,omega,tau,p0,p1,p2,p3"

    ids, labels, rows, names = read_feature_table(path)
    assert ids == ["E001", "E002", "E003"]
    assert list(labels) == [1, 1, 1]
    assert names == feature_names(4)
    np.testing.assert_array_equal(rows, np.vstack([f.values for f in features]))


def test_raw_table_and_schema_errors(tmp_path, make_segment):
    segments = [make_segment([1.0, 2.0, 3.0], index=i) for i in (1, 2)]
    path = write_table(raw_frame(segments), tmp_path / "exp4_raw.csv")
    ids, labels, rows, names = read_feature_table(path)
    assert names == ["x0", "x1", "x2"]
    assert rows.shape == (2, 3) and list(labels) == [0, 0]

    with pytest.raises(DataError):
        raw_frame(segments + [make_segment([1.0], index=3)])

    bad = tmp_path / "bad.csv"
    bad.write_text("id,class,f0\nA001,non-seizure,1.0\n")
    with pytest.raises(DataError):
        read_feature_table(bad)
    bad.write_text("segment_id,label,f0\nA001,maybe,1.0\n")
    with pytest.raises(DataError):
        read_feature_table(bad)
