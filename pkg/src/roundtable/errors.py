"""Exception types shared across the package."""
from __future__ import annotations


class RoundtableError(Exception):
    """Base class for all package-specific errors."""


class StrategySyntaxError(RoundtableError, ValueError):
    """Malformed strategy string; carries the byte offset of the first bad character."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class OutOfRangeError(RoundtableError, ValueError):
    """Strategy digit outside its dimension's range."""


class ConstraintViolationError(RoundtableError, ValueError):
    """Strategy quadruple breaks one or more cross-dimension rules."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid strategy: " + ", ".join(violations))
        self.violations = list(violations)


class SchemaError(RoundtableError, ValueError):
    """Task or config file violates the documented JSON schema.

    ``pointer`` is a JSON pointer to the offending location.
    """

    def __init__(self, message: str, pointer: str):
        super().__init__(f"{message} (at {pointer or '/'})")
        self.pointer = pointer


class ParamError(RoundtableError, ValueError):
    """Invalid generator parameters."""


class BackendError(RoundtableError):
    """A backend call failed after retries.

    When raised mid-discussion, ``partial_transcript`` holds everything
    recorded up to the failure.
    """

    def __init__(self, message: str, partial_transcript=None):
        super().__init__(message)
        self.partial_transcript = partial_transcript


class ProtocolError(RoundtableError):
    """An agent reply violated its contract (bad prediction, ids, or grammar)."""

    def __init__(self, message: str, partial_transcript=None):
        super().__init__(message)
        self.partial_transcript = partial_transcript


class NoPredictionsError(RoundtableError):
    """Majority vote requested over a board with no predictions."""


class DegenerateError(RoundtableError, ValueError):
    """Metric undefined for the given inputs (zero denominator or zero maximum)."""


class MixedSchemeError(RoundtableError, ValueError):
    """A strategy group mixes token-counting schemes."""
