"""Exception hierarchy shared by every module."""

from __future__ import annotations


class PenclustError(Exception):
    """Base class for all library errors."""


class ConfigError(PenclustError, ValueError):
    """Inconsistent or unsupported model/penalty configuration."""


class InvalidValue(PenclustError, ValueError):
    """NaN or infinite entries where finite numbers are required."""


class ConstantColumn(PenclustError, ValueError):
    def __init__(self, column: int):
        super().__init__(f"column {column} has zero variance")
        self.column = column


class InfiniteWeightConflict(PenclustError, ValueError):
    """An infinite adaptive weight multiplies a parameter away from its null value."""


class EmptyCluster(PenclustError, ArithmeticError):
    """A component's total responsibility fell to (numerically) zero."""


class NoConvergence(PenclustError, ArithmeticError):
    """An inner iterative solver hit its iteration cap.

    ``best`` holds the last iterate, which is still a valid (ascent) update.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DegenerateFit(PenclustError, ValueError):
    """BIC was requested for a fit that ended in a degenerate cluster."""


class InitFailure(PenclustError, RuntimeError):
    """K-means initialization left a cluster empty after reseeding."""


class AllStartsDegenerate(PenclustError, RuntimeError):
    def __init__(self, cell):
        super().__init__(f"every start degenerated for grid cell {cell}")
        self.cell = cell


class GlobalFailure(PenclustError, RuntimeError):
    """Every grid cell failed; nothing to select."""


class LengthMismatch(PenclustError, ValueError):
    pass


class ParseError(PenclustError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)
        self.line = line
        self.column = column


class RaggedRows(ParseError):
    pass


class NonNumericCell(ParseError):
    pass
