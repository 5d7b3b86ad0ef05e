"""Command line entry point: ``stochheat <suite> [--config PATH] [...]``."""

from __future__ import annotations

import argparse
import sys

from .config import SUITES, ConfigError, defaults, load_config, validate
from .harness import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochheat", description=__doc__)
    sub = parser.add_subparsers(dest="suite", required=True)
    for name in SUITES:
        p = sub.add_parser(name, help=f"run the {name} suite")
        p.add_argument("--config", help="INI file; defaults apply to anything missing")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--trials", type=int, help="override the trial count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else validate(defaults())
        cfg = cfg.with_overrides(**{"experiment.suites": args.suite,
                                    "experiment.seed": args.seed,
                                    "experiment.out": args.out,
                                    "experiment.trials": args.trials})
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    manifest = run(cfg)
    sys.stdout.write(manifest.text())
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
