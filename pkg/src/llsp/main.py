import argparse
import logging
import sys
from pathlib import Path

from llsp import __version__

__author__ = "David M. Rogers"
__copyright__ = "David M. Rogers"
__license__ = "MIT"

_logger = logging.getLogger(__name__)

from .config import load_config
from .errors import EXIT_OK, ConfigError, LlspError, exit_code_for
from .runner import report, run_all, run_classify, run_extract, synth_gen

COMMANDS = ["extract", "classify", "run-all", "synth-gen", "report"]


def _comma_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _counts(text):
    try:
        train, test = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected TRAIN,TEST counts, got '{}'".format(text))
    return [train, test]


def parse_args(args):
    """Parse command line parameters

    Args:
      args (List[str]): command line parameters as list of strings, without the program name

    Returns:
      :obj:`argparse.Namespace`: command line parameters namespace
    """
    parser = argparse.ArgumentParser(
        prog="llsp",
        description="Linear least squares preprocessing and seizure classification of EEG segments.")
    parser.add_argument("--version", action="version", version="llsp {}".format(__version__))
    parser.add_argument("-v", "--verbose", dest="verbosity", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG messages")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("target", nargs="?", type=Path,
                        help="synth-gen: directory to write; report: results CSV")
    parser.add_argument("--config", type=Path, help="YAML run configuration (overrides flags)")
    parser.add_argument("--data-root", help="Bonn data directory or 'synthetic'")
    parser.add_argument("--experiment", type=int, choices=[1, 2, 3, 4])
    parser.add_argument("--selection", help="custom selection, e.g. 'A[1-50] vs E[1-50]'")
    parser.add_argument("--variants", type=_comma_list, help="comma list of llsp1..llsp4, raw")
    parser.add_argument("--classifiers", type=_comma_list,
                        help="comma list of knn1, knn5, logistic, oner, tree")
    parser.add_argument("--polynomial-degree", type=int)
    parser.add_argument("--spline-degree", type=int)
    parser.add_argument("--spline-intervals", type=int)
    parser.add_argument("--omega-start", type=float, help="first grid frequency in Hz")
    parser.add_argument("--omega-end", type=float, help="last grid frequency in Hz (inclusive)")
    parser.add_argument("--omega-step", type=float)
    parser.add_argument("--tau-start", type=float, help="first grid phase in radians")
    parser.add_argument("--tau-end", type=float)
    parser.add_argument("--tau-step", type=float)
    parser.add_argument("--rank-tol", type=float,
                        help="relative singular value cutoff of a grid-point fit")
    parser.add_argument("--fit-curves", type=_comma_list, metavar="IDS",
                        help="segment ids whose fitted waves are written next to the features")
    parser.add_argument("--lenient-length", dest="strict_length", action="store_const",
                        const=False, help="accept files of other lengths with a warning")
    parser.add_argument("--split-mode", choices=["stratified-random", "deterministic-tail"])
    parser.add_argument("--train-fraction", type=float)
    parser.add_argument("--exact-counts", type=_counts, metavar="TRAIN,TEST")
    parser.add_argument("--seed", type=int, help="split seed")
    parser.add_argument("--synthetic-count", type=int, help="synthetic segments per class")
    parser.add_argument("--synthetic-length", type=int, help="samples per synthetic segment")
    parser.add_argument("--synthetic-seed", type=int)
    parser.add_argument("--logistic-memory-cap-mb", type=float)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--output", type=Path)
    return parser.parse_args(args)


def config_flags(ns):
    """The RunConfig fields given on the command line; unset ones stay None."""
    return {
        "data_root":              ns.data_root,
        "experiment":             ns.experiment,
        "selection":              ns.selection,
        "variants":               ns.variants,
        "classifiers":            ns.classifiers,
        "polynomial_degree":      ns.polynomial_degree,
        "spline_degree":          ns.spline_degree,
        "spline_intervals":       ns.spline_intervals,
        "strict_length":          ns.strict_length,
        "grid": {
            "omega_start":        ns.omega_start,
            "omega_end":          ns.omega_end,
            "omega_step":         ns.omega_step,
            "tau_start":          ns.tau_start,
            "tau_end":            ns.tau_end,
            "tau_step":           ns.tau_step,
        },
        "rank_tol":               ns.rank_tol,
        "fit_curves":             ns.fit_curves,
        "split": {
            "mode":               ns.split_mode,
            "train_fraction":     ns.train_fraction,
            "exact_counts":       ns.exact_counts,
            "seed":               ns.seed,
        },
        "synthetic": {
            "count":              ns.synthetic_count,
            "length":             ns.synthetic_length,
            "seed":               ns.synthetic_seed,
        },
        "logistic_memory_cap_mb": ns.logistic_memory_cap_mb,
        "workers":                ns.workers,
        "output":                 ns.output,
    }


def setup_logging(loglevel):
    """Setup basic logging

    Args:
      loglevel (int): minimum loglevel for emitting messages
    """
    logformat = "[%(asctime)s] %(levelname)s:%(name)s:%(message)s"
    logging.basicConfig(
        level=loglevel, stream=sys.stderr, format=logformat, datefmt="%Y-%m-%d %H:%M:%S"
    )


def dispatch(ns):
    config = load_config(ns.config, config_flags(ns))
    if ns.command == "extract":
        for variant, path in run_extract(config).items():
            print("{}\t{}".format(variant, path))
    elif ns.command == "classify":
        run_classify(config)
        print((config.output / "report.txt").read_text(), end="")
    elif ns.command == "run-all":
        print(run_all(config))
    elif ns.command == "synth-gen":
        if ns.target is None:
            raise ConfigError("synth-gen needs a target directory")
        synth_gen(config, ns.target)
    else:
        print(report(ns.target or config.output / "results.csv"), end="")


def main(argv):
    """CLI wrapper for llsp.

    Returns the process exit code: 0 on success, 2 for configuration,
    3 for data, 4 for numerical, 6 for resource-limit and 5 for any
    other failure.
    """
    ns = parse_args(argv[1:])
    setup_logging({0: logging.WARNING, 1: logging.INFO}.get(ns.verbosity, logging.DEBUG))
    _logger.debug("Starting llsp %s.", ns.command)
    try:
        dispatch(ns)
    except LlspError as err:
        _logger.error("%s", err)
        return exit_code_for(err)
    except Exception:
        _logger.exception("internal error")
        return exit_code_for(None)
    _logger.info("Completed llsp %s.", ns.command)
    return EXIT_OK


def run():
    """Calls :func:`main` passing the CLI arguments extracted from :obj:`sys.argv`

    This function can be used as entry point to create console scripts with setuptools.
    """
    sys.exit(main(sys.argv))


if __name__ == "__main__":
    run()
