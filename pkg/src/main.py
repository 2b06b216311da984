"""Command-line entry point: ``python -m src.main <command> ...``."""

import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from src.command_registry import default_registry
from src.errors import EXIT_SUCCESS, exit_code_for

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging() -> None:
    level = os.environ.get("TACTILE_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and map its result to an exit code.

    Exit codes: 0 success, 2 configuration or input error, 3 I/O error, 1 anything else.
    """
    load_dotenv()
    configure_logging()
    registry = default_registry()
    args = registry.build_parser().parse_args(argv)
    arguments = vars(args)
    command = arguments.pop("command")
    try:
        result = registry.execute(command, arguments)
    except Exception as e:
        logger.exception("Command %s crashed", command)
        return exit_code_for(e)

    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    if result.get("success"):
        return EXIT_SUCCESS
    logger.error("%s failed: %s", command, result.get("error"))
    return int(result.get("exit_code", 1))


if __name__ == "__main__":
    sys.exit(main())
