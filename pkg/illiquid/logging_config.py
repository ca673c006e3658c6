"""
Logging setup for the command-line tools.

Human runs get colored records from colorlog; batch runs can switch to one
JSON object per record with python-json-logger.
"""
import logging
import sys

import colorlog
from pythonjsonlogger import jsonlogger

HUMAN_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s%(reset)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "red,bg_white",
}


def setup_logging(level: str = "info", fmt: str = "color") -> logging.Handler:
    """Install a single stderr handler on the package logger.

    Args:
        level: Logging level name (debug, info, warning, error)
        fmt: "color" or "json"

    Returns:
        The installed handler
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level '{level}'")

    handler = logging.StreamHandler(sys.stderr)
    if fmt == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(colorlog.ColoredFormatter(HUMAN_FORMAT, log_colors=LOG_COLORS))

    logger = logging.getLogger("illiquid")
    for existing in list(logger.handlers):
        logger.removeHandler(existing)
    logger.addHandler(handler)
    logger.setLevel(numeric)
    logger.propagate = False
    return handler
