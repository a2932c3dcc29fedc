# core/log.py
import logging

from rich.logging import RichHandler

from config.settings import HYSSIM_LOG_LEVEL

_ROOT = "hyssim"
_configured = False


def get_logger(name: str) -> logging.Logger:
    """Loggers live under the `hyssim` root, which owns the only handler."""
    global _configured
    root = logging.getLogger(_ROOT)
    if not _configured:
        handler = RichHandler(show_path=False, rich_tracebacks=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(handler)
        root.setLevel(HYSSIM_LOG_LEVEL.upper())
        root.propagate = False
        _configured = True
    short = name.split(".")[-1]
    return root.getChild(short)


def set_level(level: str) -> None:
    get_logger(_ROOT)
    logging.getLogger(_ROOT).setLevel(level.upper())
