"""Command-line entry point ``tpshape``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from tpshape import experiments
from tpshape.config import defaults, load_config, validate
from tpshape.errors import ConfigError, FormatError, NumericalError

log = logging.getLogger("tpshape")

COMMANDS = ("sweep-contrast", "sweep-enhancement", "demo-correction", "tm", "g2-frames")


def _k_list(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty K list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpshape", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI config overriding the command defaults")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--k-values", type=_k_list, default=None, help="comma-separated Schmidt numbers")
        p.add_argument("--repeats", type=int, default=None)
        if name == "tm":
            p.add_argument("--save", type=Path, default=None, help="matrix file (default <out>/tm.bin)")
    return parser


def resolve_config(args):
    config = defaults(args.command)
    if args.config is not None:
        config = load_config(args.config, config)
    run = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        run["seed"] = args.seed
    if args.threads is not None:
        run["threads"] = args.threads
    if args.repeats is not None:
        run["repeats"] = args.repeats
    if args.out is not None:
        run["out"] = str(args.out)
    if run:
        config = config.with_overrides("run", **run)
    if args.k_values is not None:
        config = config.with_overrides("state", k_values=args.k_values)
    validate(config)
    return config


def run(args) -> dict:
    config = resolve_config(args)
    out = Path(config.run.out)
    if args.command == "sweep-contrast":
        result = experiments.cmd_sweep_contrast(config, out)
        return {"means": result.means().tolist()}
    if args.command == "sweep-enhancement":
        result = experiments.cmd_sweep_enhancement(config, out)
        return {"means": result.means().tolist()}
    if args.command == "demo-correction":
        return experiments.cmd_demo_correction(config, out)["summary"]
    if args.command == "tm":
        save = args.save or out / "tm.bin"
        save.parent.mkdir(parents=True, exist_ok=True)
        return experiments.cmd_tm(config, save)
    if args.command == "g2-frames":
        return experiments.cmd_g2_frames(config, out, threads=config.run.threads)["summary"]
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        summary = run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except (FormatError, OSError) as exc:
        log.error("i/o error: %s", exc)
        return 4
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
