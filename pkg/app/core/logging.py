"""
Structured logging for simulator commands.
Log lines go to stderr; every line emitted inside a run carries the run id and seed.
"""

import logging
import sys
from typing import Any

import structlog
from structlog.typing import EventDict

from app.core.config import get_settings


def add_app_context(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Stamp the simulator name and version."""
    settings = get_settings()
    event_dict["service"] = settings.APP_NAME
    event_dict["version"] = settings.APP_VERSION
    return event_dict


def bind_run_context(command: str, run_id: str, seed: int) -> None:
    """Attach the current run to all later log lines of this process."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=command, run_id=run_id, seed=seed)


def setup_logging(level: str | None = None) -> None:
    """Configure structlog on top of stdlib logging.

    ``level`` overrides LOG_LEVEL; the renderer follows LOG_FORMAT.
    """
    settings = get_settings()
    level = (level or settings.LOG_LEVEL).upper()

    # stdout carries command output, logs go to stderr
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level),
        force=True,
    )

    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        add_app_context,
    ]
    if settings.LOG_FORMAT == "json":
        processors.append(structlog.processors.JSONRenderer(sort_keys=True))
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )
