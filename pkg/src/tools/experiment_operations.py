"""Module for experiment operations."""

import logging
from typing import Any, Dict, Optional

from src.config import apply_environment, load_config
from src.errors import failure
from src.harness import run_experiment

logger = logging.getLogger(__name__)


def run_configured_experiment(config_path: str, only: Optional[str] = None) -> Dict[str, Any]:
    """
    Run the sweeps of an experiment config and write its report.

    Args:
        config_path (str): Path to the experiment JSON
        only (str, optional): "signal-size" or "training-size"

    Returns:
        Dict[str, Any]: A dictionary containing:
            - success (bool): Whether the operation succeeded
            - written (list): Report files if successful
            - means (dict): Mean accuracy per sweep if successful
            - error (str): Error message if unsuccessful
            - exit_code (int): CLI exit code if unsuccessful
    """
    try:
        config = apply_environment(load_config(config_path))
        return {"success": True, **run_experiment(config, only=only)}
    except Exception as e:
        logger.error("run failed: %s", e)
        return failure(e)
