import json
import math

import pandas as pd
import pytest

from llsp.classifiers import load_model
from llsp.config import load_config
from llsp.errors import DataError, ResourceLimitError
from llsp.evaluation import read_results_csv
from llsp.features import read_feature_table
from llsp.runner import (MANIFEST, PARTIAL_MARKER, feature_path, fit_curve_path, load_segments,
                         model_path, report, run_all, run_classify, run_extract, synth_gen)
from llsp.util.lang import file_sha256

SMALL = {
    "variants": ["llsp3", "raw"],
    "grid": {"omega_start": 1.53, "omega_end": 3.53, "tau_end": math.pi / 2},
    "spline_degree": 2,
    "spline_intervals": 3,
    "synthetic": {"count": 10, "length": 128},
}


def small_config(tmp_path, name="out", **flags):
    return load_config(flags={**SMALL, "output": tmp_path / name, **flags}, environ={})


def test_extract_writes_one_table_per_variant(tmp_path):
    config = small_config(tmp_path)
    paths = run_extract(config)
    assert sorted(paths) == ["llsp3", "raw"]
    assert paths["llsp3"] == tmp_path / "out" / "exp4_llsp3.csv"

    ids, codes, rows, names = read_feature_table(paths["llsp3"])
    assert rows.shape == (20, 3 + 2 * 3 + 1)
    assert ids[0] == "A001" and ids[-1] == "E010"
    assert list(codes).count(1) == 10
    _, _, raw, _ = read_feature_table(paths["raw"])
    assert raw.shape == (20, 128)

    means = pd.read_csv(tmp_path / "out" / "mean_frequencies.csv")
    assert sorted(means["set"]) == ["A", "E"]
    assert set(means["variant"]) == {"llsp3"}
    assert (tmp_path / "out" / "timings_extract.csv").exists()


def test_extract_writes_fit_curves(tmp_path):
    config = small_config(tmp_path, fit_curves=["E002", "A001"])
    run_extract(config)
    assert not fit_curve_path(config, "raw").exists()
    curves = pd.read_csv(fit_curve_path(config, "llsp3"), dtype={"segment_id": str})
    assert list(curves.columns) == ["segment_id", "sample", "t", "signal", "fit"]
    assert list(curves["segment_id"].unique()) == ["E002", "A001"]
    assert len(curves) == 2 * 128

    ids, _, rows, names = read_feature_table(feature_path(config, "llsp3"))
    one = curves[curves["segment_id"] == "A001"]
    residual = one["signal"] - one["fit"]
    assert float(residual @ residual) == pytest.approx(rows[ids.index("A001"), 0], rel=1e-8)

    with pytest.raises(DataError, match="Z999"):
        run_extract(small_config(tmp_path, "bad", fit_curves=["Z999"]))


def test_classify_trains_every_combination(tmp_path):
    config = small_config(tmp_path)
    run_extract(config)
    results = run_classify(config)
    assert len(results) == 2 * 5
    for (experiment, variant, kind), entry in results.items():
        assert experiment == 4
        assert entry.confusion.total == 2
        assert model_path(config, variant, kind).exists()
    assert load_model(model_path(config, "raw", "oner")).kind == "oner"

    loaded = read_results_csv(tmp_path / "out" / "results.csv")
    assert {k: e.confusion for k, e in loaded.items()} == \
        {k: e.confusion for k, e in results.items()}
    text = (tmp_path / "out" / "report.txt").read_text()
    assert text == report(tmp_path / "out" / "results.csv")
    assert "Experiment 4" in text


def test_classify_needs_features(tmp_path):
    with pytest.raises(DataError, match="run extract first"):
        run_classify(small_config(tmp_path))


def test_classify_rejects_mismatched_tables(tmp_path):
    config = small_config(tmp_path)
    run_extract(config)
    raw = feature_path(config, "raw")
    frame = pd.read_csv(raw)
    frame.iloc[:-1].to_csv(raw, index=False, float_format="%.17g")
    with pytest.raises(DataError, match="different segments"):
        run_classify(config)


def test_run_all_writes_a_manifest(tmp_path):
    config = small_config(tmp_path)
    path = run_all(config)
    out = tmp_path / "out"
    assert path == out / MANIFEST
    assert not (out / PARTIAL_MARKER).exists()

    manifest = json.loads(path.read_text())
    assert manifest["status"] == "complete"
    assert manifest["config_hash"] == config.config_hash()
    assert manifest["seeds"] == {"split": 0, "synthetic": 0}
    assert "numpy" in manifest["versions"]
    outputs = manifest["outputs"]
    assert "results.csv" in outputs and "models/exp4_llsp3_knn1.json" in outputs
    assert not any(name.startswith("timings_") for name in outputs)
    assert outputs["report.txt"] == file_sha256(out / "report.txt")


def test_failed_run_keeps_partial_marker(tmp_path):
    config = small_config(tmp_path, variants=["raw"], classifiers=["logistic"],
                          logistic_memory_cap_mb=1e-6)
    with pytest.raises(ResourceLimitError):
        run_all(config)
    out = tmp_path / "out"
    assert (out / PARTIAL_MARKER).exists()
    manifest = json.loads((out / MANIFEST).read_text())
    assert manifest["status"] == "failed"
    assert manifest["error"].startswith("ResourceLimitError")
    assert (out / "exp4_raw.csv").exists()


def test_runs_are_reproducible_across_worker_counts(tmp_path):
    first = json.loads(run_all(small_config(tmp_path, "one", workers=1)).read_text())
    second = json.loads(run_all(small_config(tmp_path, "two", workers=2)).read_text())
    assert first["outputs"] == second["outputs"]
    for name in ("exp4_llsp3.csv", "results.csv", "report.txt"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_seed_changes_the_split(tmp_path):
    first = json.loads(run_all(small_config(tmp_path, "one")).read_text())
    other = json.loads(run_all(small_config(tmp_path, "two",
                                            split={"seed": 7})).read_text())
    assert first["outputs"]["exp4_llsp3.csv"] == other["outputs"]["exp4_llsp3.csv"]
    assert first["config_hash"] != other["config_hash"]


@pytest.mark.slow
def test_planted_classes_are_separated_perfectly(tmp_path):
    classes = [{"frequency": 2.53}, {"frequency": 20.53}]
    config = load_config(flags={"output": tmp_path / "out",
                                "classifiers": ["knn1", "knn5", "logistic", "tree"],
                                "synthetic": {"classes": classes}}, environ={})
    run_all(config)
    results = read_results_csv(tmp_path / "out" / "results.csv")
    assert len(results) == 4
    for key, entry in results.items():
        assert entry.report.acc == 1.0, key


@pytest.mark.slow
def test_synthetic_sets_load_as_an_experiment(tmp_path):
    classes = [{"frequency": 2.53, "amplitude": [200.0], "noise": 5.0},
               {"frequency": 20.53, "amplitude": [300.0], "noise": 5.0}]
    gen = load_config(flags={"synthetic": {"classes": classes, "count": 100, "length": 4097}},
                      environ={})
    paths = synth_gen(gen, tmp_path / "bonn")
    assert len(paths) == 200
    assert (tmp_path / "bonn" / "Z" / "Z001.txt").exists()

    config = load_config(flags={"data_root": str(tmp_path / "bonn"), "experiment": 4},
                         environ={})
    segments = load_segments(config)
    assert len(segments) == 200
    assert segments[0].segment_id == "A001" and segments[-1].segment_id == "E100"
    assert segments[0].samples.size == 4097


@pytest.mark.bonn
def test_bonn_experiment_segments(bonn_root):
    config = load_config(flags={"data_root": str(bonn_root), "experiment": 1}, environ={})
    segments = load_segments(config)
    assert len(segments) == 200
    assert all(s.samples.size == 4097 for s in segments)


@pytest.mark.bonn
@pytest.mark.parametrize("experiment, variant, classifier, total", [
    (4, "llsp1", "knn1", 20),
    (1, "llsp3", "logistic", 22),
])
def test_bonn_reference_combinations(experiment, variant, classifier, total, bonn_root,
                                     tmp_path):
    config = load_config(flags={"data_root": str(bonn_root), "experiment": experiment,
                                "variants": [variant], "classifiers": [classifier],
                                "output": tmp_path / "out"}, environ={})
    run_all(config)
    entry = read_results_csv(tmp_path / "out" / "results.csv")[(experiment, variant, classifier)]
    cm = entry.confusion
    assert cm.total == total
    text = (tmp_path / "out" / "report.txt").read_text()
    row = "{} {} {} {} {} {}".format(variant, classifier, cm.a, cm.b, cm.c, cm.d)
    assert row in " ".join(text.split())
    assert entry.report.acc == 1.0, "confusion a={} b={} c={} d={}".format(cm.a, cm.b, cm.c, cm.d)
