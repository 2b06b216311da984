"""Shared fixtures."""

import pytest

from src.config import dump_config
from tests.utils.configs import tiny_config


@pytest.fixture
def tiny_config_path(tmp_path):
    """The tiny experiment written to JSON, reporting into tmp_path/report."""
    path = tmp_path / "tiny.json"
    dump_config(tiny_config(output_dir=str(tmp_path / "report")), path)
    return path
