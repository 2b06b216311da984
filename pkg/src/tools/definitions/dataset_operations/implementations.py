"""Dataset command implementations."""

from src.tools.dataset_operations import (
    simulate_dataset,
    compress_dataset,
    reconstruct_dataset,
)

COMMAND_IMPLEMENTATIONS = {
    "simulate": simulate_dataset,
    "compress": compress_dataset,
    "reconstruct": reconstruct_dataset,
}
