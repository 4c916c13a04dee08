"""
UAV Cooperative Perception Simulator
Command-line entry point: simulate, train, sweep and report.
"""

import sys
from collections.abc import Sequence

import structlog

from app.api.router import build_parser
from app.core.config import get_settings
from app.core.exceptions import SimulationError
from app.core.logging import setup_logging

logger = structlog.get_logger(__name__)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    setup_logging()
    settings = get_settings()
    args = build_parser().parse_args(argv)
    logger.info("Starting command", command=args.command, version=settings.APP_VERSION)
    try:
        return args.handler(args)
    except SimulationError as exc:
        logger.error("Command failed", command=args.command, error=exc.detail)
        print(f"{args.command}: error: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
