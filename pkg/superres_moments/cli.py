# cli.py
"""Batch front-end.

    superres <sweep-sensitivity|coefficients|dmin|validate> --config FILE
             [--out PATH] [--format csv|json] [--threads N] [--verbose]

Exit codes: 0 success, 1 configuration error, 2 numeric failure,
3 validation failure.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from superres_moments import __version__
from superres_moments import config as settings
from superres_moments.commands.resolution import cmd_dmin
from superres_moments.commands.sweeps import cmd_coefficients, cmd_sweep_sensitivity
from superres_moments.commands.validation import cmd_validate, raise_for_failures
from superres_moments.config import COMMANDS, OUTPUT_FORMATS, RunConfig, apply_overrides, load_config, setup_logging
from superres_moments.errors import NUMERIC_ERRORS, ConfigError, DimensionMismatch, DomainError, ValidationFailure
from superres_moments.output import ResultTable, write_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VALIDATION = 3

HANDLERS: Dict[str, Callable[[RunConfig], ResultTable]] = {
    "sweep-sensitivity": cmd_sweep_sensitivity,
    "coefficients": cmd_coefficients,
    "dmin": cmd_dmin,
    "validate": cmd_validate,
}


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="superres",
        description="Method-of-moments sensitivity sweeps, d_min scaling and model validation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="YAML or JSON run configuration")
        sub.add_argument("--out", default=None, help="Output path (default: SUPERRES_OUT, then the config, then stdout)")
        sub.add_argument("--format", choices=OUTPUT_FORMATS, default=None, help="Output format")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads (default: SUPERRES_THREADS)")
        sub.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    return parser.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.command is not None and config.command != args.command:
        raise ConfigError(f"Configuration is for '{config.command}', not '{args.command}'", field="command")
    config = apply_overrides(config, args.out, args.format, args.threads)
    if not args.verbose and not settings.LOG_LEVEL and config.log_level:
        # document level applies only when neither the flag nor the environment sets one
        setup_logging(config.log_level)
    logger.info(f"Running {args.command} with {config.threads} thread(s)")
    table = HANDLERS[args.command](config)
    write_table(table, config.output.path, config.output.format)
    if args.command == "validate":
        raise_for_failures(table)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_arguments(argv)
    try:
        setup_logging("DEBUG" if args.verbose else None)
        return run(args)
    except (ConfigError, DomainError, DimensionMismatch) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        logger.error(f"Numeric failure ({type(exc).__name__}): {exc}")
        return EXIT_NUMERIC
    except ValidationFailure as exc:
        logger.error(f"Validation failed: {exc}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
