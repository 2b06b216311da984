"""Tests for file operations module."""

import numpy as np
import pandas as pd
import pytest

import src.tools.file_operations as fo
from src.errors import StorageError


@pytest.fixture
def frames():
    rng = np.random.default_rng(0)
    return rng.uniform(0.0, 0.02, size=(6, 16)), [0, 0, 0, 1, 1, 1], [0, 1, 2, 0, 1, 2]


def test_write_and_read_frames(tmp_path, frames):
    """Test that frame records survive a write and read."""
    values, labels, perturbations = frames
    path = tmp_path / "sub" / "frames.txl"
    fo.write_frames(path, values, labels, perturbations, 4, 4)

    loaded = fo.read_frames(path)
    assert (loaded["rows"], loaded["cols"]) == (4, 4)
    np.testing.assert_array_equal(loaded["values"], values)
    assert loaded["labels"].tolist() == labels
    assert loaded["perturbations"].tolist() == perturbations


def test_frame_file_layout(tmp_path, frames):
    """Magic, a 12-byte header, then 8 + 8 * n bytes per record."""
    values, labels, perturbations = frames
    path = tmp_path / "frames.txl"
    fo.write_frames(path, values, labels, perturbations, 4, 4)
    payload = path.read_bytes()
    assert payload[:4] == b"TXL1"
    assert int.from_bytes(payload[4:8], "little") == 4
    assert int.from_bytes(payload[12:16], "little") == 6
    assert len(payload) == 4 + 12 + 6 * (8 + 8 * 16)


def test_read_frames_rejects_bad_files(tmp_path, frames):
    values, labels, perturbations = frames
    path = tmp_path / "frames.txl"
    fo.write_frames(path, values, labels, perturbations, 4, 4)
    truncated = tmp_path / "truncated.txl"
    truncated.write_bytes(path.read_bytes()[:-5])
    wrong = tmp_path / "wrong.txl"
    wrong.write_bytes(b"NOPE" + path.read_bytes()[4:])

    with pytest.raises(StorageError, match="truncated"):
        fo.read_frames(truncated)
    with pytest.raises(StorageError, match="not a TXL1"):
        fo.read_frames(wrong)
    with pytest.raises(StorageError, match="File not found"):
        fo.read_frames(tmp_path / "missing.txl")


def test_write_frames_rejects_mismatched_shapes(tmp_path, frames):
    values, labels, perturbations = frames
    with pytest.raises(StorageError):
        fo.write_frames(tmp_path / "f.txl", values, labels, perturbations, 3, 3)
    with pytest.raises(StorageError):
        fo.write_frames(tmp_path / "f.txl", values, labels[:2], perturbations, 4, 4)


def test_write_and_read_measurements(tmp_path):
    """Test that measurements keep their operator header, including a 64-bit seed."""
    values = np.arange(12, dtype=float).reshape(3, 4)
    header = {"m": 4, "n": 64, "block_size": 32, "seed": 2**63 + 5}
    path = tmp_path / "compressed.csm"
    fo.write_measurements(path, values, [2, 1, 0], header)

    loaded = fo.read_measurements(path)
    assert (loaded["m"], loaded["n"], loaded["block_size"], loaded["seed"]) == (4, 64, 32, 2**63 + 5)
    np.testing.assert_array_equal(loaded["values"], values)
    assert loaded["labels"].tolist() == [2, 1, 0]
    with pytest.raises(StorageError):
        fo.read_frames(path)


def test_json_round_trip_and_errors(tmp_path):
    path = tmp_path / "deep" / "doc.json"
    fo.write_json(path, {"b": 1, "a": [1, 2]})
    assert fo.read_json(path) == {"a": [1, 2], "b": 1}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(StorageError, match="Malformed JSON"):
        fo.read_json(broken)


def test_write_and_read_table(tmp_path):
    table = pd.DataFrame({"condition": ["raw", "compressed"], "accuracy": [90.0, 95.5]})
    path = tmp_path / "t.csv"
    fo.write_table(path, table)
    assert path.read_text().splitlines()[0] == "condition,accuracy"
    pd.testing.assert_frame_equal(fo.read_table(path), table)
    with pytest.raises(StorageError):
        fo.read_table(tmp_path / "missing.csv")


def test_pgm_scaling(tmp_path):
    """The peak maps to 255 and negative values to 0."""
    grid = np.array([[0.0, 0.01], [0.02, -0.005]])
    path = tmp_path / "img.pgm"
    fo.write_pgm(path, grid)
    assert path.read_bytes().startswith(b"P5\n2 2\n255\n")
    np.testing.assert_array_equal(fo.read_pgm(path), [[0, 128], [255, 0]])

    fo.write_pgm(path, np.zeros((3, 2)))
    assert fo.read_pgm(path).shape == (3, 2)
    with pytest.raises(StorageError):
        fo.write_pgm(path, np.zeros(4))


def test_dataset_directories(tmp_path, frames):
    """Raw datasets use TXL1 records, compressed datasets CSM1 with per-row perturbations."""
    values, labels, perturbations = frames
    raw_manifest = {"kind": "raw", "array": {"rows": 4, "cols": 4}, "objects": ["a", "b"]}
    fo.write_dataset(tmp_path / "raw", raw_manifest, values, labels, perturbations)
    assert sorted(p.name for p in (tmp_path / "raw").iterdir()) == ["frames.csv", "frames.txl", "manifest.json"]

    manifest, loaded, loaded_labels, loaded_perturbations = fo.read_dataset(tmp_path / "raw")
    assert manifest == raw_manifest
    np.testing.assert_array_equal(loaded, values)
    assert loaded_perturbations.tolist() == perturbations

    table = fo.read_table(tmp_path / "raw" / "frames.csv")
    assert list(table.columns[:3]) == ["label", "perturbation", "v0"]

    compressed_manifest = {
        "kind": "compressed",
        "matrix": {"m": 2, "n": 16, "block_size": 16, "seed": 1},
        "perturbations": perturbations,
    }
    fo.write_dataset(tmp_path / "cmp", compressed_manifest, values[:, :2], labels, perturbations)
    manifest, loaded, _, loaded_perturbations = fo.read_dataset(tmp_path / "cmp")
    assert loaded.shape == (6, 2)
    assert loaded_perturbations.tolist() == perturbations


def test_dataset_errors(tmp_path, frames):
    values, labels, perturbations = frames
    with pytest.raises(StorageError, match="Unknown dataset kind"):
        fo.write_dataset(tmp_path / "x", {"kind": "mystery"}, values, labels, perturbations)
    with pytest.raises(StorageError, match="not found"):
        fo.read_dataset(tmp_path / "absent")


def test_is_writable_directory(tmp_path):
    assert fo.is_writable_directory(tmp_path / "new" / "dir")
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert not fo.is_writable_directory(blocker / "child")
