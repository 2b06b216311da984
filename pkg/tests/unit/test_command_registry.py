"""Tests for the command registry and the CLI entry point."""

import json
from pathlib import Path

import pytest

from src.command_registry import CommandRegistry, default_registry
from src.errors import EXIT_INVALID, EXIT_STORAGE
from src.main import main


@pytest.fixture
def temp_commands_dir(tmp_path):
    """Create a temporary directory with a mock command definition and implementation."""
    definition = {
        "name": "echo",
        "description": "Repeat a word",
        "input_schema": {
            "type": "object",
            "properties": {
                "text": {"type": "string", "description": "Word to repeat"},
                "times": {"type": "integer", "flag": "--n", "default": 1, "description": "Repeats"},
                "extra": {"type": "array", "items": {"type": "number"}, "description": "Ignored numbers"},
            },
            "required": ["text"],
        },
    }
    commands_dir = Path(tmp_path) / "echo_commands"
    commands_dir.mkdir()
    (commands_dir / "echo.json").write_text(json.dumps(definition))
    (commands_dir / "implementations.py").write_text(
        """
def echo(text, times=1, extra=None):
    return {"success": True, "text": text * times, "extra": extra}

COMMAND_IMPLEMENTATIONS = {
    "echo": echo
}
"""
    )
    yield commands_dir


def test_register_commands_from_directory(temp_commands_dir):
    """Test bulk registration and execution of a command."""
    registry = CommandRegistry()
    registered = registry.register_commands_from_directory(str(temp_commands_dir))
    assert registered == ["echo"]

    args = vars(registry.build_parser().parse_args(["echo", "--text", "ab", "--n", "3", "--extra", "1", "2.5"]))
    command = args.pop("command")
    result = registry.execute(command, args)
    assert result == {"success": True, "text": "ababab", "extra": [1.0, 2.5]}


def test_execute_drops_unset_options(temp_commands_dir):
    registry = CommandRegistry()
    registry.register_commands_from_directory(str(temp_commands_dir))
    result = registry.execute("echo", {"text": "x", "times": None, "unrelated": 5})
    assert result["text"] == "x"


def test_registration_errors(tmp_path, temp_commands_dir):
    """Missing directories, missing implementations and duplicates are rejected."""
    registry = CommandRegistry()
    with pytest.raises(ValueError, match="Directory not found"):
        registry.register_commands_from_directory("/nonexistent/path")
    with pytest.raises(ValueError, match="Missing implementations.py"):
        registry.register_commands_from_directory(str(tmp_path))

    registry.register_commands_from_directory(str(temp_commands_dir))
    with pytest.raises(ValueError, match="registered twice"):
        registry.register_commands_from_directory(str(temp_commands_dir))
    with pytest.raises(ValueError, match="Unknown command"):
        registry.execute("shout", {})


def test_missing_implementation(temp_commands_dir):
    (temp_commands_dir / "implementations.py").write_text("COMMAND_IMPLEMENTATIONS = {}\n")
    with pytest.raises(ValueError, match="Missing implementation for command: echo"):
        CommandRegistry().register_commands_from_directory(str(temp_commands_dir))


def test_default_registry_exposes_every_command():
    registry = default_registry()
    assert sorted(registry.definitions) == ["compress", "eval", "reconstruct", "run", "simulate", "train"]


def test_parser_applies_schema_defaults():
    parser = default_registry().build_parser()
    args = parser.parse_args(["compress", "--in", "raw", "--out", "cmp", "--m", "16"])
    assert (args.input_dir, args.output_dir, args.m) == ("raw", "cmp", 16)
    assert (args.matrix_seed, args.block_size) == (0, 32)

    args = parser.parse_args(["train", "--in", "d", "--out", "m.json", "--c-grid", "1", "10"])
    assert args.c_grid == [1.0, 10.0]


def test_parser_rejects_missing_required_option():
    with pytest.raises(SystemExit) as excinfo:
        default_registry().build_parser().parse_args(["compress", "--in", "raw"])
    assert excinfo.value.code == 2


def test_exit_codes(tmp_path):
    """Configuration errors exit with 2, storage errors with 3."""
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID
    argv = ["compress", "--in", str(tmp_path / "nothing"), "--out", str(tmp_path / "c"), "--m", "4"]
    assert main(argv) == EXIT_STORAGE
