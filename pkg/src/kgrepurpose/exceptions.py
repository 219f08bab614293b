"""Exception hierarchy shared across the package."""


class KgRepurposeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(KgRepurposeError, ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(KgRepurposeError, ValueError):
    pass


class NotFoundError(KgRepurposeError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its argument by default
        return str(self.args[0]) if self.args else ""


class EncodingError(KgRepurposeError, ValueError):
    pass


class NumericError(KgRepurposeError, ArithmeticError):
    pass


class ExhaustionError(KgRepurposeError, RuntimeError):
    """Negative sampling could not find a corruption absent from the graph."""


class DegenerateError(KgRepurposeError, ValueError):
    """Input is well-formed but the requested statistic is undefined."""


class FitError(KgRepurposeError, RuntimeError):
    pass


class DataError(KgRepurposeError, ValueError):
    pass


class ConfigError(KgRepurposeError, ValueError):
    pass
