#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sys
import os
import logging
from typing import List, Optional

# Add current directory to path to ensure modules can be found
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dotenv import load_dotenv

from core.errors import ConfigError, TCNetError
from ui.cli import build_parser, run_command

# Load environment variables (TCNET_LOG_LEVEL, TCNET_SEED, ...)
load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Log to stderr, and to a file when one is given."""
    level_name = (level or os.getenv("TCNET_LOG_LEVEL") or "INFO").upper()
    if not isinstance(logging.getLevelName(level_name), int):
        level_name = "INFO"
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level_name, format=LOG_FORMAT, handlers=handlers, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the tcnet command line.
    Returns the process exit code: 0 on success, 2 for usage and
    configuration errors, 1 for runtime failures.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        run_command(args)
        return EXIT_OK
    except ConfigError as e:
        logger.error(f"Configuration error: {e}", exc_info=True)
        return EXIT_USAGE_ERROR
    except (TCNetError, OSError) as e:
        logger.error(f"'{args.command}' failed: {e}", exc_info=True)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
