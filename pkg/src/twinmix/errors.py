"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class TwinMixError(Exception):
    """Base class for all library errors."""


class DomainError(TwinMixError, ValueError):
    """A parameter or argument lies outside its admissible region."""


class DegenerateDataError(TwinMixError, ValueError):
    """The data cannot support a fit (too few pairs, zero variance, ...)."""


class ConvergenceError(TwinMixError, RuntimeError):
    """An optimiser failed to produce a usable maximum."""


class InputError(TwinMixError, ValueError):
    """Malformed input file or row; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
