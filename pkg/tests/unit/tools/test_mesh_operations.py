"""Tests for mesh vertex loading."""

import numpy as np
import pytest

from src.errors import InvalidInputError, StorageError
from src.tools.mesh_operations import load_vertices


def test_load_obj_vertices(tmp_path):
    """Only vertex lines of an OBJ file are read."""
    path = tmp_path / "tri.obj"
    path.write_text("# comment\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 2.5\nf 1 2 3\n")
    np.testing.assert_array_equal(load_vertices(path), [[0, 0, 0], [1, 0, 0], [0, 1, 2.5]])


def test_load_ascii_ply(tmp_path):
    path = tmp_path / "pts.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
        "property float z\nelement face 0\nend_header\n1 2 3\n4 5 6\n"
    )
    np.testing.assert_array_equal(load_vertices(path), [[1, 2, 3], [4, 5, 6]])


def test_binary_ply_is_rejected(tmp_path):
    path = tmp_path / "pts.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n")
    with pytest.raises(InvalidInputError, match="only ASCII"):
        load_vertices(path)


def test_load_plain_text(tmp_path):
    path = tmp_path / "pts.xyz"
    path.write_text("1,2,3\n\n4 5 6  # trailing\n")
    np.testing.assert_array_equal(load_vertices(path), [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize(
    "name, content",
    [
        ("empty.obj", "# nothing here\n"),
        ("short.xyz", "1 2\n"),
        ("words.xyz", "a b c\n"),
    ],
)
def test_malformed_meshes(tmp_path, name, content):
    path = tmp_path / name
    path.write_text(content)
    with pytest.raises(InvalidInputError):
        load_vertices(path)


def test_missing_mesh(tmp_path):
    with pytest.raises(StorageError, match="File not found"):
        load_vertices(tmp_path / "absent.obj")
