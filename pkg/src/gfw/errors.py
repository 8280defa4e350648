"""Exception types shared across the package."""


class GfwError(Exception):
    """Base class for all package errors."""


class ParseError(GfwError, ValueError):
    """Malformed expression text.

    Carries the 1-based column of the offending token and a short note on
    what was expected there.
    """

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


class UnboundParameter(GfwError, LookupError):
    """An expression references a parameter with no value in the table."""


class DomainError(GfwError, ArithmeticError):
    """Evaluation left the domain of an expression (1/0, sqrt of <=0, ...)."""


class ConfigError(GfwError, ValueError):
    """Invalid run configuration; message includes file/line when known."""


class SignatureError(GfwError):
    """Metric violates the required (+---) signature conditions at a point."""


class SingularMetric(GfwError):
    """|det g| below threshold; the metric cannot be inverted reliably."""


class UnsupportedGrid(GfwError):
    """The metric cannot be represented on the requested discretization."""


class NonSymmetricAssembly(GfwError):
    """A discretized operator that must be symmetric failed the check."""


class NegativeSpectrum(GfwError):
    """An operator required to be positive semidefinite has genuinely
    negative eigenvalues (beyond the clipping tolerance)."""


class ConvergenceFailure(GfwError):
    """An iterative eigensolve or root solve did not converge."""


class IntegratorDivergence(GfwError):
    """Fixed-point iteration of the implicit integrator step failed."""
