"""Structured logging configuration using structlog."""

import logging
import sys
from typing import Any

import structlog
from structlog.types import EventDict, Processor

from pyrobustlasso.config import settings


def add_log_level(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Add log level to event dict."""
    event_dict["level"] = method_name.upper()
    return event_dict


def configure_logging(level: str | None = None) -> structlog.BoundLogger:
    """
    Configure structured logging with JSON output to stderr.

    stdout is reserved for command output (report tables), so log records go
    to stderr. When Sentry is enabled via sentry_helper:
    - DEBUG: Not sent to Sentry (local only)
    - INFO: Captured as breadcrumbs only (context for errors)
    - ERROR: Sent as Sentry issues

    Args:
        level: Override for settings.log_level (e.g. from a CLI flag)

    Returns:
        Configured root logger
    """
    level_name = (level or settings.log_level).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=log_level,
        force=True,
    )

    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_logger_name,
        add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        structlog.processors.JSONRenderer(),
    ]

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    # init_sentry logs, so handlers and structlog must point at stderr first
    from pyrobustlasso.monitoring.sentry_helper import init_sentry

    sentry_enabled = init_sentry()

    logger = structlog.get_logger()
    if sentry_enabled:
        logger.info("sentry_logging_enabled", breadcrumbs="INFO+", issues="ERROR+")

    return logger  # type: ignore[no-any-return]


def get_logger(name: str = __name__) -> structlog.BoundLogger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance (configured lazily by configure_logging)
    """
    return structlog.get_logger(name)  # type: ignore[no-any-return]


def ensure_logging(level: str | None = None) -> None:
    """
    Configure logging unless it already is.

    Used by joblib worker processes, which import the package afresh and
    would otherwise fall back to structlog's stdout defaults.
    """
    if not structlog.is_configured():
        configure_logging(level)
