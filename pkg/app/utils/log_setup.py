"""
Root logging configuration for the command-line entry point.

Stdlib records from every module are rendered by structlog's
ProcessorFormatter so console and JSON output share one pipeline.
"""
import logging
import sys
from typing import Optional

import structlog

_CONFIGURED_MARK = "_probverif_handler"


def configure_logging(level: str = "INFO", renderer: str = "console", verbose: bool = False) -> None:
    """
    Install a single stream handler on the root logger.

    Args:
        level: Log level name used when verbose is False
        renderer: "console" for human-readable lines, "json" for one JSON object per line
        verbose: Force DEBUG level (per-iteration BaB state)
    """
    shared_processors = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S", utc=True),
    ]
    if renderer == "json":
        final_renderer = structlog.processors.JSONRenderer()
    else:
        final_renderer = structlog.dev.ConsoleRenderer(colors=False)

    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared_processors,
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            final_renderer,
        ],
    )

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, _CONFIGURED_MARK, False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    setattr(handler, _CONFIGURED_MARK, True)
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else _level_from_name(level))

    structlog.configure(
        processors=shared_processors + [structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def _level_from_name(name: Optional[str]) -> int:
    level = logging.getLevelName((name or "INFO").upper())
    return level if isinstance(level, int) else logging.INFO
