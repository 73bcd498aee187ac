"""Command line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 input/output error. Log level comes from MULTILAP_LOG_LEVEL
(DEBUG/INFO/WARNING/ERROR, default WARNING).
"""

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import ConfigError, FormatError, NumericalError
from .runner import (
    run_classify,
    run_eig,
    run_fastsum_bench,
    run_sbm_bench,
    run_segment_image,
)

log = logging.getLogger(__name__)

_COMMANDS = {
    "classify": run_classify,
    "segment-image": run_segment_image,
    "sbm-bench": run_sbm_bench,
    "fastsum-bench": run_fastsum_bench,
    "eig": run_eig,
}


def _setup_logging():
    level_name = os.environ.get("MULTILAP_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="multilap",
        description="Multilayer graph clustering via power mean Laplacians: "
                    "spectral eigensolves, Allen-Cahn label propagation, and "
                    "NFFT-accelerated kernel graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "classify": "semi-supervised classification from features or edge lists",
        "segment-image": "pixel classification of one or more PNG images",
        "sbm-bench": "repeated stochastic block model benchmark",
        "fastsum-bench": "fast summation accuracy and scaling tables",
        "eig": "write the k smallest power mean eigenvalues",
    }
    for name in _COMMANDS:
        cmd = sub.add_parser(name, help=descriptions[name])
        cmd.add_argument("--config", metavar="PATH", default=None,
                         help="JSON configuration file (defaults apply per key)")
        cmd.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
        cmd.add_argument("--out", metavar="DIR", default=".",
                         help="output directory (default: current)")
        cmd.add_argument("--threads", type=int, default=1,
                         help="FFT worker threads (default 1)")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        report = _COMMANDS[args.command](cfg, args.seed, out_dir=args.out,
                                         threads=args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    summary = [f"{args.command}: done"]
    if "accuracy" in report and isinstance(report["accuracy"], float):
        summary.append(f"accuracy {report['accuracy']:.4f}")
    if "outputs" in report and "report" in report["outputs"]:
        summary.append(f"report {report['outputs']['report']}")
    print("; ".join(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
