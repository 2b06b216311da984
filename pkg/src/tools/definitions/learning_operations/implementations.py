"""Learning command implementations."""

from src.tools.learning_operations import train_model, evaluate_model

COMMAND_IMPLEMENTATIONS = {
    "train": train_model,
    "eval": evaluate_model,
}
