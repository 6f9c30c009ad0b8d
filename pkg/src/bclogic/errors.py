"""Exception types shared across the package."""

from __future__ import annotations


class BclError(Exception):
    """Base class for all library errors."""


class SortMismatch(BclError):
    pass


class ArityMismatch(BclError):
    pass


class KeyCycle(BclError):
    """Key occurs inside a hashed message other than under a nested keyed hash."""


class KeyEscapes(BclError):
    """Key occurs somewhere else than the key slot of the hash."""


class ShapeMismatch(BclError):
    pass


class InvalidPosition(BclError):
    pass


class ParseError(BclError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = f" at {line}:{col}" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.col = col


class UnknownAction(BclError):
    pass


class FreshnessClash(BclError):
    pass


class IllegalCorruption(BclError):
    pass


class UnboundName(BclError):
    pass


class UnboundSymbol(BclError):
    pass


class IncompatibleSuite(BclError):
    pass


class ContextContainsReservedName(BclError):
    pass


class SpecError(BclError):
    """Malformed protocol specification file."""


class SideConditionViolation(BclError):
    """Raised by apply_rule when an instance fails its side conditions."""

    def __init__(self, report):
        self.report = report
        first = report.violations[0][0] if report.violations else "side condition failed"
        super().__init__(first)
