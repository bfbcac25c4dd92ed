"""Batch stages: extract, classify, run-all, synth-gen and report.

Output layout under ``config.output``::

    exp{N}_{variant}.csv      feature (or raw passthrough) table per variant
    exp{N}_{variant}_fit.csv  fitted wave next to the samples of each fit_curves segment
    mean_frequencies.csv      mean omega per variant and set
    results.csv               confusion counts and rates per combination
    report.txt                aligned accuracy / precision tables
    models/                   trained classifiers as JSON
    timings_extract.csv       wall-clock seconds, not part of any checksum
    timings_classify.csv
    manifest.json             written by run-all
"""
import json
import logging
import platform
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import archspec.cpu
import numpy as np
import pandas as pd
import pydantic
import scipy

from . import __version__
from .classifiers import ClassifierKind, Dataset, evaluate, save_model, train
from .config import RAW, RunConfig
from .data_ingest import (ExperimentSpec, Label, Segment, assemble_experiment, experiment,
                          generate_synthetic, load_bonn_sets, split_indices, write_bonn_set)
from .errors import DataError
from .evaluation import (ResultEntry, read_results_csv, report_table, timings_frame,
                         write_results_csv)
from .features import (extract_dataset, features_frame, fit_curve_frame, mean_frequency_table,
                       raw_frame, read_feature_table, write_table)
from .signal_model import default_amplitude
from .util.lang import file_sha256
from .util.string import plural

_logger = logging.getLogger(__name__)

PARTIAL_MARKER = ".partial"
MANIFEST = "manifest.json"
TIMING_PREFIX = "timings_"


def feature_path(config : RunConfig, variant : str) -> Path:
    return Path(config.output) / "exp{}_{}.csv".format(config.experiment, variant)


def fit_curve_path(config : RunConfig, variant : str) -> Path:
    return Path(config.output) / "exp{}_{}_fit.csv".format(config.experiment, variant)


def model_path(config : RunConfig, variant : str, kind : ClassifierKind) -> Path:
    return Path(config.output) / "models" / "exp{}_{}_{}.json".format(
        config.experiment, variant, ClassifierKind(kind).value)


def experiment_spec(config : RunConfig) -> Optional[ExperimentSpec]:
    """The Bonn experiment a config selects; None for synthetic data."""
    if config.is_synthetic:
        return None
    if config.selection is None:
        return experiment(config.experiment)
    return ExperimentSpec.parse(config.selection, id=config.experiment,
                                train_fraction=config.split.train_fraction,
                                counts=config.split.exact_counts)


def load_segments(config : RunConfig) -> List[Segment]:
    if config.is_synthetic:
        syn = config.synthetic
        _logger.info("generating %s of %d samples per class",
                     plural(syn.count, "synthetic segment"), syn.length)
        return generate_synthetic(syn.class_specs(), syn.count, syn.length,
                                  sample_rate=syn.sample_rate, seed=syn.seed)
    spec = experiment_spec(config)
    _logger.info("experiment %d: %s", spec.id, spec.selection)
    sets = load_bonn_sets(config.data_root, spec.set_tags,
                          set_dirs={k.value: v for k, v in config.set_dirs.items()},
                          prefixes={k.value: v for k, v in config.file_prefixes.items()},
                          strict=config.strict_length)
    segments, _ = assemble_experiment(sets, spec)
    return segments


def split_counts(config : RunConfig) -> Optional[Tuple[int, int]]:
    if config.split.exact_counts is not None:
        return tuple(config.split.exact_counts)
    spec = experiment_spec(config)
    if spec is None:
        return None
    return spec.train_count, spec.test_count


def run_extract(config : RunConfig) -> Dict[str, Path]:
    """Write one table per variant; returns ``{variant: path}``.

    Timings cover the extraction loop only, not reading or writing files.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    segments = load_segments(config)
    curves = _fit_curve_segments(config, segments)

    paths, timings, means = {}, [], []
    for variant in config.variants:
        if variant == RAW:
            start = time.perf_counter()
            frame = raw_frame(segments)
            elapsed = time.perf_counter() - start
        else:
            amp = default_amplitude(variant, config.polynomial_degree, config.spline_degree,
                                    config.spline_intervals)
            start = time.perf_counter()
            features = extract_dataset(segments, variant, config.grid, amp,
                                       workers=config.workers,
                                       rank_tol=config.rank_tol,
                                       progress=_logger.isEnabledFor(logging.INFO))
            elapsed = time.perf_counter() - start
            frame = features_frame(features)
            for tag, mean in mean_frequency_table(features).items():
                means.append({"variant": variant, "set": tag, "mean_omega": mean})
            if curves:
                _write_fit_curves(config, variant, curves, features, amp)
        paths[variant] = write_table(frame, feature_path(config, variant))
        timings.append({"experiment": config.experiment, "variant": variant,
                        "segments": len(segments), "seconds": elapsed})
        _logger.info("%s: %s in %.2f s -> %s", variant, plural(len(segments), "segment"),
                     elapsed, paths[variant])

    write_table(pd.DataFrame(means, columns=["variant", "set", "mean_omega"]),
                out / "mean_frequencies.csv")
    write_table(pd.DataFrame(timings, columns=["experiment", "variant", "segments", "seconds"]),
                out / (TIMING_PREFIX + "extract.csv"))
    return paths


def _fit_curve_segments(config : RunConfig, segments : List[Segment]) -> List[Segment]:
    by_id = {s.segment_id: s for s in segments}
    unknown = [i for i in config.fit_curves if i not in by_id]
    if unknown:
        raise DataError("fit_curves names unknown segments: {}".format(", ".join(unknown)))
    return [by_id[i] for i in config.fit_curves]


def _write_fit_curves(config, variant, curves, features, amp) -> Path:
    by_id = {f.segment_id: f for f in features}
    frame = pd.concat([fit_curve_frame(s, by_id[s.segment_id], amp) for s in curves],
                      ignore_index=True)
    path = write_table(frame, fit_curve_path(config, variant))
    _logger.info("%s: approximation curves of %s -> %s", variant,
                 plural(len(curves), "segment"), path)
    return path


def _read_variant(config : RunConfig, variant : str):
    path = feature_path(config, variant)
    if not path.exists():
        raise DataError("missing feature file {}; run extract first".format(path))
    return read_feature_table(path)


def run_classify(config : RunConfig) -> Dict[Tuple[int, str, str], ResultEntry]:
    """Train and test every (variant, classifier) pair on the same split."""
    out = Path(config.output)
    (out / "models").mkdir(parents=True, exist_ok=True)
    counts = split_counts(config)

    results = {}
    reference_ids = None
    for variant in config.variants:
        ids, codes, rows, names = _read_variant(config, variant)
        if reference_ids is None:
            reference_ids = ids
        elif ids != reference_ids:
            raise DataError("{} lists different segments than {}".format(
                feature_path(config, variant), feature_path(config, config.variants[0])))
        train_idx, test_idx = split_indices([Label.from_code(c) for c in codes],
                                            train_fraction=config.split.train_fraction,
                                            seed=config.split.seed, exact_counts=counts,
                                            mode=config.split.mode)
        train_set = Dataset(rows=rows[train_idx], labels=codes[train_idx], feature_names=names)
        test_set = Dataset(rows=rows[test_idx], labels=codes[test_idx], feature_names=names)
        _logger.info("%s: %d train / %d test rows of %s", variant, len(train_set),
                     len(test_set), plural(len(names), "feature"))

        for kind in config.classifiers:
            hyper = {"memory_cap_mb": config.logistic_memory_cap_mb} \
                if kind == ClassifierKind.logistic else None
            start = time.perf_counter()
            model = train(kind, train_set, hyper)
            trained = time.perf_counter()
            cm = evaluate(model, test_set)
            tested = time.perf_counter()
            save_model(model, model_path(config, variant, kind))
            entry = ResultEntry(experiment=config.experiment, variant=variant,
                                classifier=kind.value, confusion=cm,
                                train_seconds=trained - start, test_seconds=tested - trained)
            results[(entry.experiment, variant, kind.value)] = entry
            _logger.info("%s + %s: accuracy %.4f", variant, kind.value, entry.report.acc)

    write_results_csv(results, out / "results.csv")
    text, _ = report_table(results)
    (out / "report.txt").write_text(text)
    write_table(timings_frame(results), out / (TIMING_PREFIX + "classify.csv"))
    return results


def _checksums(out : Path) -> Dict[str, str]:
    sums = {}
    for path in sorted(out.rglob("*")):
        rel = path.relative_to(out).as_posix()
        if (path.is_file() and not path.name.startswith(TIMING_PREFIX)
                and rel not in (MANIFEST, PARTIAL_MARKER)):
            sums[rel] = file_sha256(path)
    return sums


def environment_info() -> Dict[str, str]:
    return {
        "llsp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "python": platform.python_version(),
        "host": archspec.cpu.host().name,
    }


def write_manifest(config : RunConfig, status : str, error : Optional[str] = None) -> Path:
    out = Path(config.output)
    manifest = {
        "status": status,
        "config": config.model_dump(mode="json"),
        "config_hash": config.config_hash(),
        "seeds": {"split": config.split.seed, "synthetic": config.synthetic.seed},
        "versions": environment_info(),
        "outputs": _checksums(out),
    }
    if error is not None:
        manifest["error"] = error
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_all(config : RunConfig) -> Path:
    """Extract then classify, leaving a ``.partial`` marker until both succeed.

    On failure the manifest records ``status: failed`` and the marker stays.
    """
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / PARTIAL_MARKER
    marker.write_text("run {} in progress\n".format(config.config_hash()))
    try:
        run_extract(config)
        run_classify(config)
    except BaseException as err:
        write_manifest(config, "failed", "{}: {}".format(type(err).__name__, err))
        _logger.error("run failed; partial outputs kept in %s", out)
        raise
    path = write_manifest(config, "complete")
    marker.unlink()
    return path


def synth_gen(config : RunConfig, directory) -> List[Path]:
    """Write the configured synthetic classes as Bonn-format set directories.

    Samples are rounded to integers, so amplitudes should be well above 1.
    Loading them back as an experiment needs ``count`` 100 and, with strict
    lengths, ``length`` 4097.
    """
    syn = config.synthetic
    segments = generate_synthetic(syn.class_specs(), syn.count, syn.length,
                                  sample_rate=syn.sample_rate, seed=syn.seed)
    peak = max(float(np.abs(s.samples).max()) for s in segments)
    if peak < 10:
        _logger.warning("synthetic peak amplitude %.3g; integer rounding will dominate", peak)
    directory = Path(directory)
    paths = []
    for tag in sorted({s.set_tag for s in segments}, key=lambda t: t.value):
        chosen = [s for s in segments if s.set_tag == tag]
        paths += write_bonn_set(chosen, directory / config.set_dirs[tag], config.file_prefixes[tag])
    _logger.info("wrote %s under %s", plural(len(paths), "file"), directory)
    return paths


def report(results_csv) -> str:
    text, _ = report_table(read_results_csv(results_csv))
    return text
