"""``detect`` command line.

    detect run --config sweep.cfg [--L 64 --snr1 6,8,10 ...]
    detect se --config sweep.cfg
    detect selftest

Exit status: 0 success, 1 bad configuration (or a failed self-test),
2 more than 10% detector failures at some grid point.  ``DETECT_LOG`` sets
the log level (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .harness import KEYS, ConfigError, excessive_failures, load_config, run_experiment, write_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURES = 2


def _list_of(conv):
    def parse(text):
        try:
            return [conv(v.strip()) for v in text.split(",") if v.strip()]
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from err
    return parse


def _add_config_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    for key, (conv, repeated) in KEYS.items():
        flag = "--" + (key if len(key) == 1 else key.replace("_", "-"))
        if repeated:
            p.add_argument(flag, dest=key, type=_list_of(conv), action="extend",
                           help=f"{key} (comma list, repeatable)")
        else:
            p.add_argument(flag, dest=key, type=conv, help=key)


def build_parser():
    parser = argparse.ArgumentParser(prog="detect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_flags(sub.add_parser("run", help="Monte-Carlo BER/MSE sweep"))
    _add_config_flags(sub.add_parser("se", help="state-evolution sweep only"))
    sub.add_parser("selftest", help="exact-oracle equivalence checks")
    return parser


def _setup_logging():
    level = os.environ.get("DETECT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_selftest
        return EXIT_OK if run_selftest() else EXIT_CONFIG

    overrides = {key: getattr(args, key) for key in KEYS}
    if args.command == "se":
        overrides["algos"] = ["se_predictor"]
    try:
        config = load_config(args.config, overrides)
    except ConfigError as err:
        print(f"detect: bad config: {err}", file=sys.stderr)
        return EXIT_CONFIG

    rows = run_experiment(config)
    text = write_csv(rows, config)
    if config.out in (None, "-"):
        sys.stdout.write(text)
    bad = excessive_failures(rows)
    for r in bad:
        print(f"detect: {r.algorithm} failed {r.failures}/{r.trials} trials at "
              f"snr1={r.snr1_db:g} dB, snr2={r.snr2_db:g} dB", file=sys.stderr)
    return EXIT_FAILURES if bad else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
