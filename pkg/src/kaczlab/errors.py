"""Exception types raised across kaczlab."""


class KaczlabError(Exception):
    """Base class for all kaczlab errors."""


class InvalidInput(KaczlabError, ValueError):
    """Arguments violate a documented precondition."""


class DegenerateMatrix(InvalidInput):
    """The matrix has numerical rank zero."""


class ZeroRow(InvalidInput):
    """A row with zero Euclidean norm was used as a projection hyperplane."""


class DegenerateRow(InvalidInput):
    """A row has no component in the row space it is restricted to."""


class NumericalFailure(KaczlabError, ArithmeticError):
    """A factorization failed to converge or produced non-finite output."""


class ParseError(KaczlabError, ValueError):
    """Malformed input file.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int or None
        1-based line number where the problem was detected.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
