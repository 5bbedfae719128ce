"""Exception hierarchy shared by all modules.

Every library error derives from :class:`EpiphaseError`; the CLI maps the
three families below to its exit codes.
"""


class EpiphaseError(Exception):
    """Base class for all library errors."""


class InputError(EpiphaseError, ValueError):
    """Bad or insufficient input data (CLI exit code 1)."""


class NumericalError(EpiphaseError, ArithmeticError):
    """A numerical routine failed to produce a usable result (exit code 2)."""


class ConfigError(EpiphaseError, ValueError):
    """Invalid configuration or breakpoint file (exit code 3)."""


class MalformedRowError(InputError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptySeriesError(InputError):
    pass


class SeriesTooShortError(InputError):
    def __init__(self, length: int, window: int):
        super().__init__(f"series shorter than window ({length} < {window})")
        self.length = length
        self.window = window


class NonFiniteInputError(InputError):
    pass


class WrongWindowLengthError(InputError):
    pass


class WindowTooShortError(InputError):
    pass


class ZeroVarianceError(InputError):
    pass


class InvalidHistogramError(InputError):
    pass


class DegenerateColumnError(InputError):
    def __init__(self, name: str):
        super().__init__(f"indicator column {name!r} has zero variance over valid rows")
        self.name = name


class NotSymmetricError(InputError):
    pass


class DateRangeMismatchError(InputError):
    pass


class OutOfSegmentError(InputError):
    pass


class InvalidParametersError(InputError):
    pass


class TooFewPointsError(InputError):
    pass


class InvalidDataError(InputError):
    pass


class NoConvergenceError(NumericalError):
    """Raised only on request; fitters normally return a flagged best-so-far."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class SegmentFitError(EpiphaseError):
    """Wraps a fitter error with the index of the failing segment."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"segment {index}: {cause}")
        self.index = index
        self.cause = cause


class EmptyScoreError(InputError):
    pass


class InvalidSpecError(ConfigError):
    pass
