"""Exception types raised across the package.

Every error is a :class:`CopartialError`, itself a ``ValueError``, so callers
can catch either the whole family or a specific condition.
"""


class CopartialError(ValueError):
    """Base class for all errors raised by copartial."""


class NonPositiveEntry(CopartialError):
    """A compositional cell is zero, negative or not a number."""

    def __init__(self, row, col, value, label=None):
        self.row = row
        self.col = col
        self.value = value
        where = f"row {row}, column {col}"
        if label is not None:
            where += f" ({label})"
        super().__init__(
            f"non-positive entry {value!r} at {where}; parts must be strictly "
            "positive (use a pseudocount policy to handle zeros explicitly)"
        )


class DimensionTooSmall(CopartialError):
    """Fewer samples or parts than the operation requires."""


class IndexOutOfRange(CopartialError):
    """A part index is outside 0..D-1."""


class EmptyIndexSet(CopartialError):
    """A reference or target index set is empty."""


class MissingPermutation(CopartialError):
    """A permutation-dependent structural matrix was requested without one."""


class IncompatibleReference(CopartialError):
    """A reference change was requested between incompatible specifications."""


class DegenerateData(CopartialError):
    """The data carry no usable variation (constant log-ratios)."""


class DimensionMismatch(CopartialError):
    """Matrix shapes do not conform."""


class SingularCovariance(CopartialError):
    """Covariance inversion failed; shrinkage may help."""

    def __init__(self, message, rcond=None):
        self.rcond = rcond
        if rcond is not None:
            message += f" (reciprocal condition number {rcond:.3e})"
        super().__init__(message + "; consider enabling shrinkage")


class LambdaOutOfRange(CopartialError):
    """Shrinkage intensity outside [0, 1]."""


class SingularExplanatory(CopartialError):
    """The explanatory covariance of a least-squares predictor is singular."""


class InadmissibleReference(CopartialError):
    """The requested reference part is not among the controlled variables."""


class NonPositiveDiagonal(CopartialError):
    """A pseudoinverse diagonal entry is not positive (numerically broken)."""


class ZeroVariance(CopartialError):
    """A variance needed in a denominator is zero."""


class InvalidSubset(CopartialError):
    """An index subset violates the operation's requirements."""


class ParseError(CopartialError):
    """A CSV cell could not be parsed."""

    def __init__(self, line, column, message):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class DuplicateHeader(CopartialError):
    """Two CSV header fields carry the same label."""
