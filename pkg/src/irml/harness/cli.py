"""``irml <experiment> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime or
numerical error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, DataError, IrmlError
from .config import EXPERIMENTS, ExperimentConfig, override, parse_text
from .experiments import run_experiment

log = logging.getLogger("irml")


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser():
    ap = argparse.ArgumentParser(
        prog="irml", description="Run one semantic-communication experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS, help="experiment id")
    ap.add_argument("--config", help="flat 'key = value' config file")
    ap.add_argument("--seed", type=int, help="single seed (overrides the config's seeds)")
    ap.add_argument("--seeds", help="comma-separated seeds")
    ap.add_argument("--snr-db", type=_floats, help="comma-separated SNR grid in dB")
    ap.add_argument("--servers", type=int, help="number of servers K")
    ap.add_argument("--local-steps", type=int, help="local steps E between aggregations")
    ap.add_argument("--rounds", type=int, help="aggregation rounds")
    ap.add_argument("--noniid-p", type=_floats, help="non-iid fraction(s) p")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    ap.add_argument("--full", action="store_true", help="use the whole triple file")
    ap.add_argument("--lenient", action="store_true", help="warn on unknown config keys")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args):
    cfg = ExperimentConfig()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        parsed = parse_text(text, strict=not args.lenient)
        for key, line, msg in parsed.warnings:
            log.warning("%s line %s: %s: %s", args.config, line, key, msg)
        cfg = parsed.config
    seeds = None
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}", errors=[("seeds", None, str(exc))]) from exc
    if args.seed is not None:
        seeds = (args.seed,)
    return override(cfg, experiment=args.experiment, seeds=seeds, snr_db=args.snr_db,
                    servers=args.servers, local_steps=args.local_steps, rounds=args.rounds,
                    noniid_p=args.noniid_p, out=args.out, full=True if args.full else None)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        bundle = run_experiment(cfg, force=args.force, config_path=args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (IrmlError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4
    for p in bundle.csvs:
        print(p)
    print(bundle.manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
