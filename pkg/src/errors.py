"""Exception hierarchy shared by every module."""


class TactileError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(TactileError, ValueError):
    """An argument is outside its valid domain."""


class DegenerateInputError(InvalidInputError):
    """Input geometry collapses (e.g. coincident vertices)."""


class CoverageError(InvalidInputError):
    """A sphere lattice cannot cover the requested primitive."""


class DimensionError(TactileError, ValueError):
    """Vector or grid sizes do not agree."""


class SelectionError(DimensionError):
    """More measurement rows were requested than exist."""


class OverBudgetError(InvalidInputError):
    """A sparsity budget exceeds the number of measurements."""


class DegenerateSetError(InvalidInputError):
    """A labeled set is missing a class it needs."""


class ProvenanceError(DimensionError):
    """A compressed signal was produced by a different measurement operator."""


class ConfigurationError(TactileError, ValueError):
    """An experiment configuration is invalid."""


class ReportError(TactileError, ValueError):
    """There is nothing to report."""


class StorageError(TactileError, OSError):
    """A file could not be read or written."""


EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_STORAGE = 3


def exit_code_for(error: BaseException) -> int:
    """CLI exit code of an exception: 2 for bad configuration or input, 3 for I/O."""
    if isinstance(error, (StorageError, OSError)):
        return EXIT_STORAGE
    if isinstance(error, (TactileError, ValueError)):
        return EXIT_INVALID
    return EXIT_FAILURE


def failure(error: BaseException) -> dict:
    """Result dictionary of a failed command."""
    return {"success": False, "error": str(error), "exit_code": exit_code_for(error)}
