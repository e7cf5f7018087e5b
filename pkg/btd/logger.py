import logging

import sentry_sdk
from rich.console import Console
from rich.logging import RichHandler
from sentry_sdk.integrations.logging import LoggingIntegration

from .settings import settings


def setup_sentry(dsn: str, name: str, version: str) -> None:
    """Initialize sentry connection."""

    sentry_sdk.init(
        dsn=dsn,
        attach_stacktrace=True,
        shutdown_timeout=5,
        integrations=[LoggingIntegration(level=logging.DEBUG, event_level=logging.WARNING)],
        release=f"{name}@{version}",
        environment=settings.sentry_environment,
    )


logging_formatter = logging.Formatter("%(message)s", datefmt="[%X]")

logging_handler = RichHandler(console=Console(stderr=True), show_path=False)
logging_handler.setFormatter(logging_formatter)


def get_logger(name: str) -> logging.Logger:
    """Get a logger with a given name."""

    logger: logging.Logger = logging.getLogger(name)
    if logging_handler not in logger.handlers:
        logger.addHandler(logging_handler)
    logger.setLevel(settings.log_level)

    return logger
