"""
Custom exception classes for the fixed-point few-shot engine.

Every exception carries the process exit code the CLI returns for it:
2 configuration error, 3 data error, 4 numeric divergence.
"""
from typing import List, Optional


class QuantFewShotError(Exception):
    """Base exception for all engine errors."""
    exit_code: int = 1


# ============= CONFIGURATION =============

class ConfigError(QuantFewShotError):
    """Raised when a run configuration is invalid."""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"Invalid value for '{field}': {message}"
        super().__init__(message)


class InvalidFormatError(ConfigError):
    """Raised when a Q(i,f) format is malformed or out of bounds."""

    def __init__(self, text: str, reason: str):
        self.text = text
        super().__init__(f"Bad fixed-point format '{text}': {reason}")


# ============= DATA =============

class DataError(QuantFewShotError):
    """Raised for invalid data, files and shapes."""
    exit_code = 3


class ShapeMismatchError(DataError):
    """Raised when a tensor dimension does not match what an operation needs."""

    def __init__(self, op: str, dimension: str, expected, got):
        self.op = op
        self.dimension = dimension
        self.expected = expected
        self.got = got
        super().__init__(f"{op}: dimension '{dimension}' expected {expected}, got {got}")


class WeightFileError(DataError):
    """Base for weight file format errors."""
    pass


class MagicError(WeightFileError):
    """Raised when the file does not start with the weight file magic."""

    def __init__(self, found: bytes):
        self.found = found
        super().__init__(f"Not a weight file: magic {found!r}")


class VersionError(WeightFileError):
    """Raised for an unsupported weight file version."""

    def __init__(self, version: int):
        self.version = version
        super().__init__(f"Unsupported weight file version {version}")


class CorruptHeaderError(WeightFileError):
    """Raised when the tensor table cannot be parsed."""
    pass


class TruncatedPayloadError(WeightFileError):
    """Raised when the payload is shorter than the table declares."""
    pass


class BoundsError(WeightFileError):
    """Raised when a tensor's byte range is out of bounds or overlaps another."""
    pass


class DuplicateTensorError(WeightFileError):
    """Raised when a tensor name appears twice."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Duplicate tensor name '{name}'")


class WeightMismatchError(DataError):
    """Raised when a weight store does not match an architecture."""

    def __init__(self, missing: List[str], extra: List[str], mismatched: Optional[List[str]] = None):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        self.mismatched = sorted(mismatched or [])
        parts = []
        if self.missing:
            parts.append(f"missing tensors: {', '.join(self.missing)}")
        if self.extra:
            parts.append(f"extra tensors: {', '.join(self.extra)}")
        if self.mismatched:
            parts.append(f"shape mismatches: {', '.join(self.mismatched)}")
        super().__init__("Weight store does not match architecture; " + "; ".join(parts))


class DatasetError(DataError):
    """Raised when a dataset file or directory is malformed."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ReportNotFoundError(DataError):
    """Raised when a stored report does not exist."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Report '{name}' not found")


class InsufficientSamplesError(DataError):
    """Raised when a class has fewer samples than an episode needs."""

    def __init__(self, class_label: int, available: int, required: int):
        self.class_label = class_label
        self.available = available
        self.required = required
        super().__init__(
            f"Class {class_label} has {available} samples, episodes need {required}"
        )


class EmptyClassError(DataError):
    """Raised when a support class has no samples."""
    pass


# ============= NUMERIC =============

class NumericError(QuantFewShotError):
    """Raised for numerical faults."""
    exit_code = 4


class NonFiniteError(NumericError):
    """Raised when NaN or Inf reaches an operation that requires finite input."""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"Non-finite value in {where}")


class DivergenceError(NumericError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch}, batch {batch}: loss={loss}")
