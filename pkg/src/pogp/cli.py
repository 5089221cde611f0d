"""Command-line entry point: ``pog run``, ``pog tune`` and ``pog hellinger``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, load_dataset, run_to_files
from .errors import DataError, InvalidArgumentError, NumericalFailureError, UnsupportedInputError
from .gp_core import PredictiveGaussian, tune_hyperparameters
from .hellinger import hellinger_gaussian

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("pogp")


def _kernel_arg(value: str) -> dict:
    text = Path(value).read_text() if Path(value).is_file() else value
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"kernel must be JSON or a JSON file: {exc}") from None
    if not {"amplitude", "lengthscales", "noise_variance"} <= set(d):
        raise argparse.ArgumentTypeError("kernel JSON needs amplitude, lengthscales, noise_variance")
    return d


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pog", description="Parsimonious online GP regression")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="stream a dataset through POG or the dense GP")
    run.add_argument("--data", dest="data_path", required=True)
    held = run.add_mutually_exclusive_group(required=True)
    held.add_argument("--test", dest="test_path")
    held.add_argument("--split", dest="split_fraction", type=float)
    run.add_argument("--algo", choices=("pog", "dense"), default="pog")
    run.add_argument("--eps", dest="eps0", type=float, default=1e-3)
    run.add_argument("--schedule", dest="schedule_kind", choices=("constant", "diminishing"),
                     default="constant")
    run.add_argument("--tune", dest="tune_subset_size", type=int, default=200,
                     help="size of the random subset used for hyperparameter search")
    run.add_argument("--kernel", type=_kernel_arg, default=None,
                     help="fixed kernel as JSON (or a JSON file); skips tuning")
    run.add_argument("--seed", type=int, default=42)
    run.add_argument("--eval-every", dest="eval_every", type=int, default=50)
    run.add_argument("--ref-mode", dest="ref_mode", default="newest",
                     help="'newest' or 'grid:<csv>'")
    run.add_argument("--standardize", dest="standardize_features", action="store_true")
    run.add_argument("--standardize-targets", dest="standardize_targets", action="store_true")
    run.add_argument("--shuffle", action="store_true")
    run.add_argument("--epochs", type=int, default=1)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--loo", dest="loo_method", choices=("fast", "rebuild"), default="fast")
    run.add_argument("--timing", action="store_true",
                     help="fill elapsed_micros (makes output non-reproducible)")
    hdr = run.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="has_header", action="store_true", default=None)
    hdr.add_argument("--no-header", dest="has_header", action="store_false")
    run.add_argument("--out", dest="output_path", required=True)

    tune = sub.add_parser("tune", help="fit kernel hyperparameters and print them as JSON")
    tune.add_argument("--data", required=True)
    tune.add_argument("--subset", type=int, default=200)
    tune.add_argument("--seed", type=int, default=42)

    hel = sub.add_parser("hellinger", help="closed-form Hellinger distance of two scalar Gaussians")
    for name in ("mean1", "var1", "mean2", "var2"):
        hel.add_argument(f"--{name}", type=float, required=True)
    return parser


def _cmd_run(args) -> int:
    fields = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    config = ExperimentConfig(**fields)
    result = run_to_files(config)
    if result.final is not None:
        log.info("final model order %d, SMSE %.4f, MSLL %.4f", result.final_model_order,
                 result.final.smse, result.final.msll)
    return EXIT_OK


def _cmd_tune(args) -> int:
    X, y = load_dataset(args.data)
    params = tune_hyperparameters(X, y, min(args.subset, X.shape[0]), args.seed)
    print(json.dumps(params.to_dict()))
    return EXIT_OK


def _cmd_hellinger(args) -> int:
    g1 = PredictiveGaussian(np.array([args.mean1]), np.array([[args.var1]]))
    g2 = PredictiveGaussian(np.array([args.mean2]), np.array([[args.var2]]))
    print(repr(hellinger_gaussian(g1, g2)))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "tune": _cmd_tune, "hellinger": _cmd_hellinger}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidArgumentError, UnsupportedInputError) as exc:
        print(f"pog: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"pog: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailureError as exc:
        print(f"pog: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
