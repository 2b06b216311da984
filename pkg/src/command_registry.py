"""Command registry: JSON command definitions bound to their implementations and exposed through argparse."""

import argparse
import importlib.util
import json
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

DEFINITIONS_ROOT = Path(__file__).parent / "tools" / "definitions"
COMMAND_GROUPS = ("dataset_operations", "learning_operations", "experiment_operations")

_ARG_TYPES = {"string": str, "integer": int, "number": float}


class CommandRegistry:
    """Commands loaded from definition directories, keyed by name."""

    def __init__(self):
        self.definitions: Dict[str, Dict[str, Any]] = {}
        self.functions: Dict[str, Callable[..., Dict[str, Any]]] = {}

    def register_command(self, definition: Dict[str, Any], function: Callable) -> str:
        """Register a single command with its implementation."""
        name = definition["name"]
        if name in self.definitions:
            raise ValueError(f"Command registered twice: {name}")
        self.definitions[name] = definition
        self.functions[name] = function
        return name

    def register_commands_from_directory(self, definitions_dir: str) -> List[str]:
        """Register every command of a directory holding JSON definitions and an implementations.py.

        implementations.py must export a COMMAND_IMPLEMENTATIONS dictionary
        mapping command names to functions.

        Args:
            definitions_dir: Path to the directory, absolute or relative to the working directory

        Returns:
            List of registered command names

        Raises:
            ValueError: If the directory or an implementation is missing
            ImportError: If implementations.py cannot be loaded
        """
        abs_path = os.path.abspath(definitions_dir)
        definitions_path = Path(abs_path)
        if not definitions_path.is_dir():
            raise ValueError(f"Directory not found: {abs_path}")

        impl_path = definitions_path / "implementations.py"
        if not impl_path.exists():
            raise ValueError(f"Missing implementations.py in {abs_path}")

        spec = importlib.util.spec_from_file_location(
            f"commands_{definitions_path.name}", impl_path
        )
        if not spec or not spec.loader:
            raise ImportError(f"Could not load {impl_path}")
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)

        if not hasattr(module, "COMMAND_IMPLEMENTATIONS"):
            raise ValueError("implementations.py must export COMMAND_IMPLEMENTATIONS dictionary")
        implementations = module.COMMAND_IMPLEMENTATIONS

        registered = []
        for definition_file in sorted(definitions_path.glob("*.json")):
            with open(definition_file) as f:
                definition = json.load(f)
            name = definition["name"]
            if name not in implementations:
                raise ValueError(f"Missing implementation for command: {name}")
            registered.append(self.register_command(definition, implementations[name]))
        return registered

    def build_parser(self, prog: str = "tactile") -> argparse.ArgumentParser:
        """One subcommand per registered command; options come from ``input_schema``."""
        parser = argparse.ArgumentParser(
            prog=prog, description="Compressed tactile sensing and compressed learning"
        )
        subparsers = parser.add_subparsers(dest="command", required=True)
        for name, definition in sorted(self.definitions.items()):
            sub = subparsers.add_parser(name, help=definition.get("description", ""))
            schema = definition.get("input_schema", {})
            required = set(schema.get("required", []))
            for dest, prop in schema.get("properties", {}).items():
                flag = prop.get("flag", "--" + dest.replace("_", "-"))
                kwargs: Dict[str, Any] = {"dest": dest, "help": prop.get("description", "")}
                kind = prop.get("type", "string")
                if kind == "boolean":
                    kwargs["action"] = "store_true"
                elif kind == "array":
                    kwargs["nargs"] = "+"
                    kwargs["type"] = _ARG_TYPES[prop.get("items", {}).get("type", "string")]
                else:
                    kwargs["type"] = _ARG_TYPES[kind]
                if "enum" in prop:
                    kwargs["choices"] = prop["enum"]
                if "default" in prop:
                    kwargs["default"] = prop["default"]
                if dest in required:
                    kwargs["required"] = True
                sub.add_argument(flag, **kwargs)
        return parser

    def execute(self, name: str, arguments: Dict[str, Any]) -> Dict[str, Any]:
        """Call a command with the arguments its schema declares; unset optional ones are dropped."""
        if name not in self.functions:
            raise ValueError(f"Unknown command: {name}")
        properties = self.definitions[name].get("input_schema", {}).get("properties", {})
        kwargs = {k: v for k, v in arguments.items() if k in properties and v is not None}
        return self.functions[name](**kwargs)


def default_registry(root: Optional[Path] = None) -> CommandRegistry:
    registry = CommandRegistry()
    root = root or DEFINITIONS_ROOT
    for group in COMMAND_GROUPS:
        registry.register_commands_from_directory(str(root / group))
    return registry
