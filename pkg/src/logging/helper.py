"""Console logging setup shared by every command."""

import logging
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

console = Console()
err_console = Console(stderr=True)

LOG_FORMAT = "%(message)s"


def setup_logging(level: Union[int, str] = logging.INFO, console: Optional[Console] = None) -> None:
    """Route the root logger through a single RichHandler on stderr."""
    handler = RichHandler(console=console or err_console, show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="[%X]"))
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
