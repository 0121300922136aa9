"""
Command-line entry point.

    ranlab run <config.json> [--set dotted.key=value]... [--jobs N]
    ranlab validate <config.json>
    ranlab version

Exit codes: 0 ok, 2 config error, 3 runtime failure.
"""
import argparse
import logging
import sys
from typing import List, Optional

import ranlab
from ranlab.core import constants
from ranlab.core.config import get_settings
from ranlab.core.exceptions import ConfigError, RanlabError

logger = logging.getLogger(__name__)


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, get_settings().log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ranlab", description="Deterministic multi-cell radio-network lab")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run an experiment")
    run_p.add_argument("config", type=str, help="Path to the JSON experiment config")
    run_p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config field by dotted path (repeatable); values parse as JSON",
    )
    run_p.add_argument("--jobs", type=int, default=None, help="Worker processes for seed dispatch")

    validate_p = sub.add_parser("validate", help="Check a config without running it")
    validate_p.add_argument("config", type=str, help="Path to the JSON experiment config")

    sub.add_parser("version", help="Print the version")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()

    if args.command == "version":
        print(ranlab.__version__)
        return constants.EXIT_OK

    # imported here so that `version` does not pay for numpy and matplotlib
    from ranlab.pipelines import runner

    try:
        if args.command == "validate":
            print(runner.validate(args.config).render())
        else:
            manifest = runner.run(args.config, args.overrides, args.jobs)
            logger.info(f"✓ Run complete: config {manifest.config_hash[:12]}, {manifest.wall_clock_s:.1f}s")
        return constants.EXIT_OK
    except ConfigError as e:
        logger.error(f"Config error at '{e.key}': {e.message}")
        print(f"error: {e.key}: {e.message}", file=sys.stderr)
        return constants.EXIT_CONFIG_ERROR
    except RanlabError as e:
        logger.error(f"Run failed: {e}")
        return constants.EXIT_RUNTIME_ERROR
    except Exception as e:
        logger.exception(f"Run failed: {str(e)}")
        return constants.EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
