"""Exception types raised across the package."""


class EmuFleetError(Exception):
    """Base class for all package errors."""


class ParseError(EmuFleetError, ValueError):
    """Malformed dataset or checkpoint text. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(EmuFleetError, ValueError):
    pass


class DegenerateRangeError(ValidationError):
    pass


class ShapeError(EmuFleetError, ValueError):
    pass


class DomainError(EmuFleetError, ValueError):
    pass


class NumericError(EmuFleetError, ArithmeticError):
    """A non-finite value appeared. ``name`` identifies the offending quantity."""

    def __init__(self, message, name=None):
        self.name = name
        super().__init__(message)
