from . import __version__
from .commands import cli
from .logger import get_logger, setup_sentry
from .settings import settings


logger = get_logger(__name__)


def main() -> None:
    if settings.sentry_dsn:
        logger.debug("initializing sentry")
        setup_sentry(settings.sentry_dsn, "btd", __version__)

    cli(prog_name="btd")
