"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for malformed inputs
or incompatible representations, and :class:`NumericalError` for rank or
convergence failures. The CLI maps them to exit codes 2 and 3.
"""

from __future__ import annotations


class YocoError(Exception):
    """Base class for all package errors."""


class ValidationError(YocoError, ValueError):
    """Input data or configuration violates a documented precondition."""


class DimensionMismatch(ValidationError):
    pass


class MissingValue(ValidationError):
    pass


class NonPositiveWeight(ValidationError):
    pass


class NonIntegerFrequencyWeight(ValidationError):
    pass


class MissingClusters(ValidationError):
    pass


class MissingColumn(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class UnavailableStatistic(ValidationError):
    """The requested statistic was deliberately not retained at compression."""


class NonStaticColumn(ValidationError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} varies within at least one cluster")
        self.column = column


class RaggedCluster(ValidationError):
    pass


class NotBalanced(ValidationError):
    pass


class NonBinaryOutcome(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, line: int, column: str, message: str = ""):
        text = f"line {line}, column {column!r}"
        if message:
            text += f": {message}"
        super().__init__(text)
        self.line = line
        self.column = column


class NumericalError(YocoError, ArithmeticError):
    """Estimation failed for numerical reasons."""


class RankDeficient(NumericalError):
    def __init__(self, columns: list[str] | tuple[str, ...]):
        self.columns = tuple(columns)
        super().__init__("design is rank deficient; collinear columns: " + ", ".join(self.columns))


class NonPositiveDF(NumericalError):
    pass


class DidNotConverge(NumericalError):
    def __init__(self, max_iter: int, message: str = ""):
        self.max_iter = max_iter
        super().__init__(message or f"no convergence within {max_iter} iterations")
