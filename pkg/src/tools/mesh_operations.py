"""Module for reading object vertices from mesh files."""

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from src.errors import InvalidInputError, StorageError

logger = logging.getLogger(__name__)


def _parse_obj(lines: List[str]) -> List[List[float]]:
    return [[float(v) for v in line.split()[1:4]] for line in lines if line.startswith("v ")]


def _parse_ply(lines: List[str], path: Path) -> List[List[float]]:
    if not lines or lines[0].strip() != "ply":
        raise InvalidInputError(f"{path} is not a PLY file")
    vertex_count = None
    body_start = None
    for index, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["format", "binary_little_endian"] or parts[:2] == ["format", "binary_big_endian"]:
            raise InvalidInputError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            vertex_count = int(parts[2])
        if parts == ["end_header"]:
            body_start = index + 1
            break
    if vertex_count is None or body_start is None:
        raise InvalidInputError(f"{path}: PLY header has no vertex element")
    body = lines[body_start : body_start + vertex_count]
    return [[float(v) for v in line.split()[:3]] for line in body]


def _parse_xyz(lines: List[str]) -> List[List[float]]:
    rows = []
    for line in lines:
        stripped = line.split("#", 1)[0].replace(",", " ").split()
        if stripped:
            rows.append([float(v) for v in stripped[:3]])
    return rows


def load_vertices(file_path: Union[str, Path]) -> np.ndarray:
    """
    Read mesh vertices in mm.

    Supports Wavefront OBJ (``v x y z`` lines), ASCII PLY, and plain text
    with one ``x y z`` (or ``x,y,z``) vertex per line.

    Args:
        file_path (str): Path to the mesh file

    Returns:
        np.ndarray: (V, 3) vertex coordinates

    Raises:
        StorageError: If the file cannot be read
        InvalidInputError: If the file holds no parseable vertices
    """
    path = Path(file_path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}") from e
    except OSError as e:
        raise StorageError(f"Error reading file: {e}") from e
    except UnicodeDecodeError as e:
        raise InvalidInputError(f"{path} is not a text mesh file") from e

    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            rows = _parse_obj(lines)
        elif suffix == ".ply":
            rows = _parse_ply(lines, path)
        else:
            rows = _parse_xyz(lines)
    except ValueError as e:
        if isinstance(e, InvalidInputError):
            raise
        raise InvalidInputError(f"{path}: malformed vertex line ({e})") from e

    if any(len(row) != 3 for row in rows):
        raise InvalidInputError(f"{path}: every vertex needs three coordinates")
    vertices = np.asarray(rows, dtype=float).reshape(-1, 3)
    if len(vertices) == 0:
        raise InvalidInputError(f"{path}: no (x, y, z) vertices found")
    logger.info("Loaded %d vertices from %s", len(vertices), path)
    return vertices
