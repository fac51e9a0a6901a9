"""Exception hierarchy shared by the library and the command line.

Library code raises these; only ``reach_audit.cli`` turns them into exit codes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence


class ReachAuditError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for this failure."""

    exit_code: int = 1


class InvalidInputError(ReachAuditError, ValueError):
    """Non-finite numbers, inconsistent shapes or violated preconditions."""

    exit_code = 1


class UsageError(ReachAuditError):
    """Bad command-line arguments or missing paths."""

    exit_code = 1


class DataParseError(ReachAuditError):
    """A ratings or bundle file could not be parsed."""

    exit_code = 2

    def __init__(self, message: str, path: Optional[Path | str] = None, line: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.line = line
        location = ""
        if self.path is not None:
            location = f"{self.path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class RangeViolationError(DataParseError):
    """A rating fell outside the declared range."""


class BundleFormatError(DataParseError):
    """Model bundle manifest and tables disagree, or the version is unknown."""


class NumericalError(ReachAuditError, ArithmeticError):
    """The simplex engine hit its iteration cap or produced an unverifiable answer."""

    exit_code = 3

    def __init__(self, message: str, basis: Optional[Sequence[int]] = None):
        self.basis = list(basis) if basis is not None else None
        super().__init__(message)
