"""Sentry integration helper functions.

Sentry is configured with LoggingIntegration, which captures records from
Python's logging module (which structlog writes to):

1. structlog logs at INFO+ become Sentry breadcrumbs
2. structlog logs at ERROR+ become Sentry issues

The helpers below add structured context (replication index, first-stage
label, penalty levels) to solver failures so that an issue in Sentry carries
enough information to rerun the failing replication locally.

Usage:
    from pyrobustlasso.monitoring.sentry_helper import capture_solver_failure

    try:
        fit = fit_first_stage(...)
    except SolverError as e:
        capture_solver_failure(
            stage="first_stage",
            error_message=str(e),
            context={"label": "d1", "rep_index": 17},
            exception=e,
        )
"""

from typing import Any

import structlog

from pyrobustlasso.config import settings

logger = structlog.get_logger(__name__)

# Track if Sentry is enabled
_sentry_enabled = False
_sentry_sdk: Any = None


def init_sentry() -> bool:
    """
    Initialize Sentry SDK if configured.

    Returns:
        True if Sentry was initialized, False otherwise
    """
    global _sentry_enabled, _sentry_sdk

    if not settings.sentry_dsn:
        logger.debug("sentry_disabled")
        return False

    try:
        import logging as stdlib_logging

        import sentry_sdk
        from sentry_sdk.integrations.logging import LoggingIntegration

        _sentry_sdk = sentry_sdk

        sentry_logging = LoggingIntegration(
            level=stdlib_logging.INFO,  # Capture INFO+ as breadcrumbs
            event_level=stdlib_logging.ERROR,  # Capture ERROR+ as issues
        )

        sentry_sdk.init(
            dsn=settings.sentry_dsn,
            environment=settings.sentry_environment,
            traces_sample_rate=settings.sentry_traces_sample_rate,
            max_breadcrumbs=100,
            integrations=[sentry_logging],
        )

        _sentry_enabled = True
        logger.info("sentry_initialized", environment=settings.sentry_environment)
        return True

    except ImportError:
        logger.warning("sentry_sdk_not_installed", sentry_dsn=settings.sentry_dsn)
        return False


def is_sentry_enabled() -> bool:
    """
    Check if Sentry is enabled.

    Returns:
        True if Sentry is enabled
    """
    return _sentry_enabled


def get_sentry_sdk() -> Any:
    """
    Get Sentry SDK instance for direct use (spans, transactions, etc.).

    Returns:
        Sentry SDK instance or None if Sentry not enabled
    """
    return _sentry_sdk if _sentry_enabled else None


def log_non_convergence(stage: str, **context: Any) -> None:
    """
    Log a solver that stopped on its iteration budget.

    Non-convergence is reported as a WARNING (a breadcrumb in Sentry, not an
    issue): results remain usable and carry a converged=False flag.

    Args:
        stage: Solver stage ("lasso", "first_stage")
        **context: Structured fields (label, iterations, violation, ...)
    """
    logger.warning(f"{stage}_not_converged", **context)


def capture_solver_failure(
    stage: str,
    error_message: str,
    context: dict[str, Any] | None = None,
    exception: Exception | None = None,
) -> None:
    """
    Capture a solver failure to both stderr and Sentry.

    Args:
        stage: Where the failure happened ("fit", "replication")
        error_message: Error message
        context: Structured context (rep_index, label, penalties, ...)
        exception: Exception object to capture in Sentry (optional)
    """
    log_data: dict[str, Any] = {"stage": stage, "error": error_message}
    if context:
        log_data.update(context)

    logger.error(f"{stage}_failed", **log_data)

    if _sentry_sdk:
        if exception:
            with _sentry_sdk.new_scope() as scope:
                scope.set_tag("stage", stage)
                if context:
                    scope.set_context("solver", context)
                _sentry_sdk.capture_exception(exception)
        else:
            _sentry_sdk.capture_message(
                f"{stage} failure: {error_message}",
                level="error",
                extras=context or {},
            )
