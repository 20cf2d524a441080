"""Exception hierarchy shared across picalib."""


class PicalibError(Exception):
    """Base class for all library errors."""


class MissingColumn(PicalibError, KeyError):
    def __init__(self, column):
        super().__init__(column)
        self.column = column

    def __str__(self):
        return f"column {self.column!r} not found in header"


class ParseError(PicalibError, ValueError):
    """A CSV cell that is not a finite decimal; row is 1-based excluding the header."""

    def __init__(self, row, col, value):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"cannot parse {value!r} at row {row}, column {col!r}")


class EmptyFile(PicalibError, ValueError):
    pass


class FractionSum(PicalibError, ValueError):
    pass


class ZeroVariance(PicalibError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class NonFiniteLoss(PicalibError, FloatingPointError):
    def __init__(self, message, lam=None):
        self.lam = lam
        if lam is not None:
            message = f"{message} (lambda={lam!r})"
        super().__init__(message)


class AllDegenerate(PicalibError, ValueError):
    pass


class NoValidAlphaPrime(PicalibError, ValueError):
    pass


class DomainError(PicalibError, ValueError):
    pass


class RegimeError(PicalibError, ValueError):
    pass


class ConfigError(PicalibError, ValueError):
    pass
