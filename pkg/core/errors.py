"""
Exception hierarchy shared by every package.

The CLI maps each class onto a stable process exit code (see EXIT_CODES).
"""

from typing import Any, Dict, Optional


class HyperRiskError(ValueError):
    """Base class for every error raised on purpose by this project."""

    exit_code = 1


class ConfigError(HyperRiskError):
    """Invalid or unknown configuration value."""

    exit_code = 1


class DataError(HyperRiskError):
    """Malformed or inconsistent input data, located where possible."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[str] = None,
    ):
        self.path = path
        self.line = line
        self.column = column
        location = []
        if path:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        prefix = f"{':'.join(location)}: " if location else ""
        super().__init__(prefix + message)


class DimensionMismatchError(DataError):
    """A checkpoint or tensor disagrees with the dataset along one axis."""

    def __init__(self, axis: str, expected: Any, actual: Any):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        super().__init__(f"dimension mismatch on axis '{axis}': expected {expected}, got {actual}")


class NumericalError(HyperRiskError):
    """Training diverged or produced non-finite values."""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class StructureViolationError(NumericalError):
    """A learned graph or hypergraph broke its sparsity / range contract."""


EXIT_CODES = {
    "ok": 0,
    "usage": ConfigError.exit_code,
    "data": DataError.exit_code,
    "numerical": NumericalError.exit_code,
}
