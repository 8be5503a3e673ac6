import logging

from .logging.helper import setup_logging
from .numerics import is_debug, set_debug


def setup_runtime(debug: bool = False) -> None:
    """Switch debug mode on or off for the whole process.

    Debug mode checks every tensor operation for NaN/Inf and logs at DEBUG
    level; otherwise only INFO and above is shown.
    """
    set_debug(debug)
    setup_logging(logging.DEBUG if debug else logging.INFO)
    logging.getLogger(__name__).debug("numerics debug checks %s", "on" if is_debug() else "off")
