import logging

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "hashbeam"


def setup_logging(verbose: bool = False, console: Console | None = None) -> logging.Logger:
    """Attach a single RichHandler (stderr) to the package logger."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)

    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=verbose,
        rich_tracebacks=verbose,
    )
    handler.setFormatter(logging.Formatter("%(name)s - %(message)s"))
    logger.addHandler(handler)
    logger.propagate = False
    return logger
