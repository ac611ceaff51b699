"""Application logging setup."""

import json
import logging
import logging.config
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import colorlog

from .settings import LoggingSettings

FILE_HANDLERS = ("file", "error_file")


def _strip_file_handlers(config: Dict[str, Any]) -> None:
    for name in FILE_HANDLERS:
        config.get("handlers", {}).pop(name, None)
    for logger_config in list(config.get("loggers", {}).values()) + [config.get("root", {})]:
        handlers = logger_config.get("handlers")
        if handlers:
            logger_config["handlers"] = [h for h in handlers if h not in FILE_HANDLERS]


def setup_logging(
    log_level: str = "WARNING",
    log_dir: Optional[str] = None,
    config_path: Optional[str] = None,
) -> None:
    """Configure logging from the dictConfig file; diagnostics always go to stderr.

    File handlers are kept only when log_dir is given; their file names are
    rewritten into that directory.
    """
    level = getattr(logging, log_level.upper(), logging.WARNING)
    path = Path(config_path) if config_path else Path(LoggingSettings().log_config)

    if path.exists():
        try:
            with open(path, encoding="utf-8") as f:
                config = json.load(f)

            if log_dir:
                directory = Path(log_dir)
                directory.mkdir(parents=True, exist_ok=True)
                for handler_config in config.get("handlers", {}).values():
                    if "filename" in handler_config:
                        handler_config["filename"] = str(directory / Path(handler_config["filename"]).name)
            else:
                _strip_file_handlers(config)

            console = config.get("handlers", {}).get("console")
            if console is not None:
                console["level"] = logging.getLevelName(level)

            logging.config.dictConfig(config)
            logging.getLogger("polyglot_qe").setLevel(level)
            return
        except (OSError, ValueError, TypeError, KeyError) as e:
            print(f"Warning: Could not load log config: {e}", file=sys.stderr)

    # Fallback to basic configuration
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(
        colorlog.ColoredFormatter("%(log_color)s%(asctime)s [%(levelname)s]%(reset)s %(name)s: %(message)s")
    )
    logging.basicConfig(level=level, handlers=[handler], force=True)
