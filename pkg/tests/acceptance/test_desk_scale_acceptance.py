"""Desk-scale accuracy trends. Minutes of compute; set TACTILE_ACCEPTANCE=1 to run."""

import os

import numpy as np
import pytest

from src.config import desk_scale
from src.harness import build_datasets, run_signal_size_sweep

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(os.environ.get("TACTILE_ACCEPTANCE") != "1", reason="set TACTILE_ACCEPTANCE=1"),
]


@pytest.fixture(scope="module")
def sweeps():
    config = desk_scale(n_jobs=-1)
    return run_signal_size_sweep(config, build_datasets(config))


def test_compressed_learning_stays_accurate(sweeps):
    """64 measurements of a 32x32 array still classify the desk objects."""
    _, compressed = sweeps
    assert compressed.axis == (1024.0, 64.0, 16.0)
    assert compressed.mean[1] >= 85.0


def test_compressed_beats_low_resolution_arrays(sweeps):
    raw, compressed = sweeps
    assert compressed.mean[1] >= raw.mean[1]
    assert compressed.mean[2] >= raw.mean[2]


def test_accuracy_falls_with_signal_size(sweeps):
    for sweep in sweeps:
        assert np.all(np.diff(sweep.mean) <= 3.0)
