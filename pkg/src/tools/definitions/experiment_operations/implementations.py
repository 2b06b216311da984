"""Experiment command implementations."""

from src.tools.experiment_operations import run_configured_experiment

COMMAND_IMPLEMENTATIONS = {
    "run": run_configured_experiment,
}
