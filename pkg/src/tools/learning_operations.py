"""Module for learning operations: train and evaluate DAGSVM models on dataset directories."""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.config import FORCE_SCALE_C_GRID
from src.errors import failure
from src.harness import make_splits, observation_indices
from src.learn import DEFAULT_TOL, LabeledSet, evaluate, load_model, save_model, train_dag
from src.tools.file_operations import read_dataset, write_json, write_table

logger = logging.getLogger(__name__)


def _load_labeled(input_dir: str) -> Tuple[Dict[str, Any], LabeledSet, np.ndarray, int]:
    manifest, values, labels, perturbations = read_dataset(input_dir)
    classes = tuple(range(len(manifest.get("objects", [])))) or ()
    count = int(manifest.get("perturbation_count", int(perturbations.max()) + 1))
    return manifest, LabeledSet(values, labels, classes), perturbations, count


def train_model(
    input_dir: str,
    output_path: str,
    c_grid: Optional[List[float]] = None,
    split_seed: int = 0,
    dev_fraction: float = 0.4,
    val_fraction: float = 0.2,
    tol: float = DEFAULT_TOL,
) -> Dict[str, Any]:
    """
    Train a DAGSVM on the development and validation perturbations of a dataset.

    Args:
        input_dir (str): Raw, compressed or reconstructed dataset directory
        output_path (str): Model JSON destination
        c_grid (list): Candidate C values; defaults to the force-scale grid 1 to 1e4
        split_seed (int): Seed of the perturbation split
        dev_fraction (float): Development share of perturbations
        val_fraction (float): Validation share of perturbations
        tol (float): SMO tolerance

    Returns:
        Dict[str, Any]: success, model path, pair count and selected C per pair
    """
    try:
        _, data, perturbations, count = _load_labeled(input_dir)
        splits = make_splits(count, (dev_fraction, val_fraction), split_seed)
        split = (
            observation_indices(perturbations, splits.development),
            observation_indices(perturbations, splits.validation),
        )
        model = train_dag(data, c_grid or FORCE_SCALE_C_GRID, split=split, seed=split_seed, tol=tol)
        save_model(model, output_path)
        return {
            "success": True,
            "model_path": output_path,
            "pairs": len(model.pairwise),
            "selected_c": {f"{a}-{b}": c for (a, b), c in sorted(model.selected_c.items())},
        }
    except Exception as e:
        logger.error("train failed: %s", e)
        return failure(e)


def evaluate_model(
    model_path: str,
    input_dir: str,
    report_path: str,
    confusion_path: str,
    split_seed: Optional[int] = None,
    dev_fraction: float = 0.4,
    val_fraction: float = 0.2,
) -> Dict[str, Any]:
    """
    Evaluate a saved model and write a JSON report and a confusion CSV.

    When ``split_seed`` is given only the test perturbations of that split are
    evaluated; otherwise every observation is.

    Returns:
        Dict[str, Any]: success and accuracy (%)
    """
    try:
        model = load_model(model_path)
        manifest, data, perturbations, count = _load_labeled(input_dir)
        if split_seed is not None:
            splits = make_splits(count, (dev_fraction, val_fraction), split_seed)
            data = data.subset(observation_indices(perturbations, splits.test))
        result = evaluate(model, data)
        names = manifest.get("objects") or [str(c) for c in result.classes]
        table = pd.DataFrame(result.confusion, columns=[str(c) for c in result.classes])
        table.insert(0, "true_class", [str(c) for c in result.classes])
        write_table(confusion_path, table)
        write_json(
            report_path,
            {**result.to_dict(), "objects": names, "observations": len(data), "split_seed": split_seed},
        )
        return {"success": True, "accuracy": result.accuracy}
    except Exception as e:
        logger.error("eval failed: %s", e)
        return failure(e)
