"""Module for dataset operations: simulate, compress and reconstruct dataset directories."""

import logging
import math
from pathlib import Path
from typing import Any, Dict

import numpy as np

from src.compression import CompressedSignal, SbheMatrix, build_sbhe, compress_batch
from src.config import apply_environment, build_roster, load_config
from src.errors import InvalidInputError, failure
from src.recovery import WaveletBasis, reconstruct
from src.simulator import TaxelArray, generate_dataset
from src.tools.file_operations import read_dataset, write_dataset, write_pgm

logger = logging.getLogger(__name__)


def simulate_dataset(config_path: str, output_dir: str) -> Dict[str, Any]:
    """
    Simulate raw datasets for every array resolution of an experiment config.

    Args:
        config_path (str): Path to the experiment JSON
        output_dir (str): Directory receiving one ``<rows>x<cols>`` dataset per array

    Returns:
        Dict[str, Any]: A dictionary containing:
            - success (bool): Whether the operation succeeded
            - datasets (list): Written dataset directories if successful
            - error (str): Error message if unsuccessful
            - exit_code (int): CLI exit code if unsuccessful
    """
    try:
        config = apply_environment(load_config(config_path))
        models = build_roster(config)
        written = []
        for array in config.arrays().values():
            frames = generate_dataset(
                array,
                models,
                config.row_offsets,
                config.col_offsets,
                config.rotations,
                sigma=config.noise_sigma,
                base_seed=config.base_seed,
                press_depth=config.press_depth,
                n_jobs=config.n_jobs,
            )
            perturbations = [f.perturbation_index for f in frames]
            manifest = {
                "kind": "raw",
                "n": array.n,
                "array": array.to_dict(),
                "objects": [m.name for m in models],
                "perturbation_count": config.perturbation_count,
                "noise_sigma": config.noise_sigma,
                "base_seed": config.base_seed,
            }
            target = Path(output_dir) / f"{array.rows}x{array.cols}"
            write_dataset(
                target,
                manifest,
                np.stack([f.values for f in frames]),
                [f.label for f in frames],
                perturbations,
            )
            written.append(str(target))
        return {"success": True, "datasets": written}
    except Exception as e:
        logger.error("simulate failed: %s", e)
        return failure(e)


def compress_dataset(
    input_dir: str, output_dir: str, m: int, matrix_seed: int = 0, block_size: int = 32
) -> Dict[str, Any]:
    """
    Apply one SBHE operator to every frame of a raw dataset.

    Args:
        input_dir (str): Raw dataset directory
        output_dir (str): Destination of the compressed dataset
        m (int): Number of measurements
        matrix_seed (int): Seed of the operator
        block_size (int): Hadamard block size

    Returns:
        Dict[str, Any]: success, the output directory and the compression factor
    """
    try:
        manifest, values, labels, perturbations = read_dataset(input_dir)
        if manifest.get("kind") != "raw":
            raise InvalidInputError(f"{input_dir} holds a {manifest.get('kind')} dataset, not raw frames")
        matrix = build_sbhe(values.shape[1], m, block_size, matrix_seed)
        compressed = compress_batch(matrix, values)
        out_manifest = {
            **manifest,
            "kind": "compressed",
            "m": matrix.m,
            "matrix": matrix.to_header(),
            "perturbations": [int(p) for p in perturbations],
        }
        write_dataset(output_dir, out_manifest, compressed, labels, perturbations)
        return {"success": True, "output_dir": output_dir, "compression_factor": matrix.compression_factor}
    except Exception as e:
        logger.error("compress failed: %s", e)
        return failure(e)


def reconstruct_dataset(
    input_dir: str,
    output_dir: str,
    m: int,
    k_max: int,
    matrix_seed: int = 0,
    block_size: int = 32,
    tol: float = 1e-9,
) -> Dict[str, Any]:
    """
    Recover full frames from a compressed dataset with OMP over a Daubechies-2 basis.

    The operator is rebuilt from ``matrix_seed``, ``m`` and ``block_size``;
    signals measured with a different operator are rejected.

    Each estimate is also written as ``frames/<index>_<label>.pgm``, all on
    one gray scale whose white is the largest recovered reading.

    Returns:
        Dict[str, Any]: success, the output directory, the number of unconverged frames and of images
    """
    try:
        manifest, values, labels, perturbations = read_dataset(input_dir)
        if manifest.get("kind") != "compressed":
            raise InvalidInputError(f"{input_dir} holds a {manifest.get('kind')} dataset, not compressed signals")
        header = manifest["matrix"]
        array = TaxelArray.from_dict(manifest["array"])
        if array.rows != array.cols:
            raise InvalidInputError("Wavelet recovery needs a square array")
        matrix: SbheMatrix = build_sbhe(int(header["n"]), m, block_size, matrix_seed)
        basis = WaveletBasis(int(math.isqrt(matrix.n)))
        estimates = []
        unconverged = 0
        for row, label in zip(values, labels):
            signal = CompressedSignal(
                values=row,
                matrix_seed=int(header["seed"]),
                m=int(header["m"]),
                n=int(header["n"]),
                block_size=int(header["block_size"]),
                label=int(label),
            )
            result = reconstruct(signal, matrix, basis, k_max, residual_tol=tol, array=array)
            unconverged += not result.converged
            estimates.append(result.values)
        out_manifest = {**manifest, "kind": "reconstructed", "k_max": k_max, "residual_tol": tol}
        write_dataset(output_dir, out_manifest, np.stack(estimates), labels, perturbations)
        peak = max(float(np.max(estimates)), 0.0)
        for index, (estimate, label) in enumerate(zip(estimates, labels)):
            path = Path(output_dir) / "frames" / f"{index:05d}_{int(label):02d}.pgm"
            write_pgm(path, estimate.reshape(array.rows, array.cols), max_value=peak)
        return {"success": True, "output_dir": output_dir, "unconverged": unconverged, "images": len(estimates)}
    except Exception as e:
        logger.error("reconstruct failed: %s", e)
        return failure(e)
