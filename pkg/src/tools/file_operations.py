"""Module for file operations: dataset records, manifests, tables and images."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import StorageError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FRAME_MAGIC = b"TXL1"
MEASUREMENT_MAGIC = b"CSM1"
FRAME_FILE = "frames.txl"
MEASUREMENT_FILE = "compressed.csm"
TABLE_FILE = "frames.csv"
MANIFEST_FILE = "manifest.json"

# Little-endian headers following the 4-byte magic.
_FRAME_HEADER = np.dtype([("rows", "<u4"), ("cols", "<u4"), ("count", "<u4")])
_MEASUREMENT_HEADER = np.dtype(
    [("m", "<u4"), ("n", "<u4"), ("block_size", "<u4"), ("seed", "<u8"), ("count", "<u4")]
)


def _record_dtype(width: int, with_perturbation: bool) -> np.dtype:
    fields = [("label", "<i4")]
    if with_perturbation:
        fields.append(("perturbation", "<i4"))
    fields.append(("values", "<f8", (width,)))
    return np.dtype(fields)


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Cannot create directory {path.parent}: {e}") from e
    return path


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}") from e
    except OSError as e:
        raise StorageError(f"Error reading {path}: {e}") from e


def _write_bytes(path: PathLike, payload: bytes) -> None:
    path = _ensure_parent(path)
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise StorageError(f"Error writing {path}: {e}") from e


def write_json(path: PathLike, data: Dict[str, Any]) -> None:
    """
    Write a JSON document with sorted keys.

    Args:
        path: Destination file
        data: JSON-serializable mapping

    Raises:
        StorageError: If the file cannot be written
    """
    _write_bytes(path, (json.dumps(data, indent=2, sort_keys=True) + "\n").encode())


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        return json.loads(_read_bytes(path).decode())
    except json.JSONDecodeError as e:
        raise StorageError(f"Malformed JSON in {path}: {e}") from e


def write_frames(
    path: PathLike,
    values: np.ndarray,
    labels: Sequence[int],
    perturbations: Sequence[int],
    rows: int,
    cols: int,
) -> None:
    """
    Write frames as TXL1 records.

    Layout: magic, (rows, cols, count) as uint32, then per frame an int32
    label, an int32 perturbation index and rows * cols float64 readings.

    Args:
        path: Destination file
        values: (count, rows * cols) readings
        labels: Label per frame
        perturbations: Perturbation index per frame
        rows: Array rows
        cols: Array columns

    Raises:
        StorageError: If the shapes disagree or the file cannot be written
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != rows * cols or len(labels) != len(values) or len(perturbations) != len(values):
        raise StorageError(f"Frame block of shape {values.shape} does not fit a {rows}x{cols} array")
    header = np.array([(rows, cols, len(values))], dtype=_FRAME_HEADER)
    records = np.zeros(len(values), dtype=_record_dtype(rows * cols, True))
    records["label"] = labels
    records["perturbation"] = perturbations
    records["values"] = values
    _write_bytes(path, FRAME_MAGIC + header.tobytes() + records.tobytes())


def read_frames(path: PathLike) -> Dict[str, Any]:
    """
    Read TXL1 records.

    Returns:
        Dict[str, Any]: rows, cols, values (count, n), labels, perturbations

    Raises:
        StorageError: If the file is missing, truncated or not TXL1
    """
    payload = _read_bytes(path)
    if payload[:4] != FRAME_MAGIC:
        raise StorageError(f"{path} is not a TXL1 frame file")
    header = np.frombuffer(payload, dtype=_FRAME_HEADER, count=1, offset=4)[0]
    rows, cols, count = int(header["rows"]), int(header["cols"]), int(header["count"])
    dtype = _record_dtype(rows * cols, True)
    offset = 4 + _FRAME_HEADER.itemsize
    if len(payload) != offset + count * dtype.itemsize:
        raise StorageError(f"{path} is truncated or has trailing bytes")
    records = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    return {
        "rows": rows,
        "cols": cols,
        "values": records["values"].copy(),
        "labels": records["label"].astype(np.int64),
        "perturbations": records["perturbation"].astype(np.int64),
    }


def write_measurements(
    path: PathLike,
    values: np.ndarray,
    labels: Sequence[int],
    header: Dict[str, Any],
) -> None:
    """
    Write compressed signals as CSM1 records.

    Layout: magic, (m, n, block_size) as uint32, the matrix seed as uint64,
    count as uint32, then per signal an int32 label and m float64 values.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    m = int(header["m"])
    if values.shape[1] != m or len(labels) != len(values):
        raise StorageError(f"Measurement block of shape {values.shape} does not match m = {m}")
    head = np.array(
        [(m, int(header["n"]), int(header["block_size"]), int(header["seed"]), len(values))],
        dtype=_MEASUREMENT_HEADER,
    )
    records = np.zeros(len(values), dtype=_record_dtype(m, False))
    records["label"] = labels
    records["values"] = values
    _write_bytes(path, MEASUREMENT_MAGIC + head.tobytes() + records.tobytes())


def read_measurements(path: PathLike) -> Dict[str, Any]:
    payload = _read_bytes(path)
    if payload[:4] != MEASUREMENT_MAGIC:
        raise StorageError(f"{path} is not a CSM1 measurement file")
    head = np.frombuffer(payload, dtype=_MEASUREMENT_HEADER, count=1, offset=4)[0]
    m, count = int(head["m"]), int(head["count"])
    dtype = _record_dtype(m, False)
    offset = 4 + _MEASUREMENT_HEADER.itemsize
    if len(payload) != offset + count * dtype.itemsize:
        raise StorageError(f"{path} is truncated or has trailing bytes")
    records = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    return {
        "m": m,
        "n": int(head["n"]),
        "block_size": int(head["block_size"]),
        "seed": int(head["seed"]),
        "values": records["values"].copy(),
        "labels": records["label"].astype(np.int64),
    }


def write_table(path: PathLike, table: pd.DataFrame) -> None:
    """Write a DataFrame as CSV without the index."""
    path = _ensure_parent(path)
    try:
        table.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise StorageError(f"Error writing {path}: {e}") from e


def read_table(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}") from e
    except (OSError, pd.errors.ParserError) as e:
        raise StorageError(f"Error reading {path}: {e}") from e


def write_pgm(path: PathLike, grid: np.ndarray, max_value: Optional[float] = None) -> None:
    """
    Write a 2-D array as an 8-bit binary PGM, scaled so ``max_value`` maps to 255.

    Negative values are clipped to 0. An all-zero grid writes a black image.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise StorageError(f"PGM needs a 2-D grid, got shape {grid.shape}")
    peak = float(grid.max()) if max_value is None else float(max_value)
    scaled = np.zeros(grid.shape) if peak <= 0 else np.clip(grid / peak, 0.0, 1.0) * 255.0
    pixels = np.rint(scaled).astype(np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode()
    _write_bytes(path, header + pixels.tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    payload = _read_bytes(path)
    parts = payload.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise StorageError(f"{path} is not a binary PGM")
    width, height = int(parts[1]), int(parts[2])
    pixels = np.frombuffer(payload[len(payload) - width * height :], dtype=np.uint8)
    return pixels.reshape(height, width)


def frame_table(values: np.ndarray, labels: Sequence[int], perturbations: Sequence[int]) -> pd.DataFrame:
    values = np.atleast_2d(values)
    table = pd.DataFrame(values, columns=[f"v{i}" for i in range(values.shape[1])])
    table.insert(0, "perturbation", np.asarray(perturbations, dtype=np.int64))
    table.insert(0, "label", np.asarray(labels, dtype=np.int64))
    return table


def write_dataset(
    directory: PathLike,
    manifest: Dict[str, Any],
    values: np.ndarray,
    labels: Sequence[int],
    perturbations: Sequence[int],
) -> Path:
    """
    Write a dataset directory: manifest.json, a record file and frames.csv.

    Raw and reconstructed datasets use TXL1 records with the array geometry
    from ``manifest["array"]``; compressed datasets use CSM1 records with the
    operator header from ``manifest["matrix"]``.

    Raises:
        StorageError: On an unknown kind or an unwritable directory
    """
    directory = Path(directory)
    kind = manifest.get("kind")
    if kind in ("raw", "reconstructed"):
        array = manifest["array"]
        write_frames(directory / FRAME_FILE, values, labels, perturbations, int(array["rows"]), int(array["cols"]))
    elif kind == "compressed":
        write_measurements(directory / MEASUREMENT_FILE, values, labels, manifest["matrix"])
    else:
        raise StorageError(f"Unknown dataset kind: {kind!r}")
    write_table(directory / TABLE_FILE, frame_table(values, labels, perturbations))
    write_json(directory / MANIFEST_FILE, manifest)
    logger.info("Wrote %s dataset of %d records to %s", kind, len(labels), directory)
    return directory


def read_dataset(directory: PathLike) -> Tuple[Dict[str, Any], np.ndarray, np.ndarray, np.ndarray]:
    """
    Read a dataset directory written by ``write_dataset``.

    Returns:
        Tuple: (manifest, values, labels, perturbation indices)
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise StorageError(f"Dataset directory not found: {directory}")
    manifest = read_json(directory / MANIFEST_FILE)
    if manifest.get("kind") == "compressed":
        records = read_measurements(directory / MEASUREMENT_FILE)
        perturbations = np.asarray(manifest.get("perturbations", [0] * len(records["labels"])), dtype=np.int64)
    else:
        records = read_frames(directory / FRAME_FILE)
        perturbations = records["perturbations"]
    return manifest, records["values"], records["labels"], perturbations


def is_writable_directory(directory: PathLike) -> bool:
    """True if ``directory`` exists as a writable directory or can be created."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError:
        return False
    return os.access(directory, os.W_OK)
