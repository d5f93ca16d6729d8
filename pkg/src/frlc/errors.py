"""Error taxonomy shared across the package.

Every error raised by the library derives from :class:`FrlcError`, so callers
(and the CLI) can catch one base class. The CLI prints errors to stderr as
``"<ClassName>: <message>"`` and maps them to exit code 1; soft
non-convergence is reported through :class:`NotConverged`, which carries the
best-effort result so iterative drivers can keep going.
"""

from __future__ import annotations

from typing import Any


class FrlcError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(FrlcError, ValueError):
    """Operand shapes are inconsistent with each other or with the problem."""


class DimMismatch(ShapeMismatch):
    """Point clouds have different feature dimensions."""


class DegenerateMarginal(FrlcError, ValueError):
    """A marginal entry needed as a divisor is (numerically) zero.

    Raised when an inner-marginal entry falls below 1e-15; divisions above
    that threshold are additionally floored at 1e-300 so no inf/NaN can
    escape.
    """


class NonPositiveKernel(FrlcError, ValueError):
    """A scaling step hit a kernel row/column with (numerically) zero mass."""


class NotConverged(FrlcError, RuntimeError):
    """An iteration budget ran out before the stopping rule was met.

    Attributes:
        residual: Stopping-rule value at the final iterate.
        iters: Iterations actually performed.
        result: Best-effort output (same type the routine would return), so
            callers may continue with it.
    """

    def __init__(self, message: str, residual: float, iters: int, result: Any = None):
        super().__init__(message)
        self.residual = float(residual)
        self.iters = int(iters)
        self.result = result


class MissingIntraCost(FrlcError, ValueError):
    """A quadratic objective was requested without intra-domain matrices."""


class NegativeOmega(FrlcError, ValueError):
    """The closed-form latent-weight minimizer needs entrywise ω ≥ 0."""


class InvalidRank(FrlcError, ValueError):
    """A rank argument is outside the operation's valid range."""


class TooLarge(FrlcError, ValueError):
    """Input exceeds the size ceiling of an exhaustive reference routine."""


class ParseError(FrlcError, ValueError):
    """A text input (matrix file, edge list, config) could not be parsed.

    Attributes:
        line_no: 1-based line number of the offending line, when known.
    """

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class IsolatedNodeWarning(UserWarning):
    """A degree-0 graph node was patched with a unit self-loop."""
