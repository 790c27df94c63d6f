"""
Logging setup shared by the CLI and the MCP server.
Everything goes to stderr; stdout carries command results and the MCP stdio transport.
"""

import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is at emit time (test runners swap it)."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def configure_logging(level: str | int | None = None) -> None:
    """
    Install a single stderr handler on the package logger.

    Args:
        level: Level name or number; None keeps WARNING.
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    package_logger = logging.getLogger("qos_mcp")
    package_logger.setLevel(level or logging.WARNING)
    for handler in list(package_logger.handlers):
        if isinstance(handler, _StderrHandler):
            package_logger.removeHandler(handler)
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package_logger.addHandler(handler)
