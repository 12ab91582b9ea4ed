"""Exception hierarchy.

Errors split into two families so that callers (notably the command line
front end) can tell bad input apart from a numerical breakdown.
"""


class H2DelayError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(H2DelayError, ValueError):
    """Input is malformed or violates a structural requirement."""


class DimensionError(ValidationError):
    """Matrix dimensions are inconsistent."""


class NumericalError(H2DelayError, ArithmeticError):
    """A computation failed or produced an untrustworthy result."""


class NotHurwitzError(NumericalError):
    """A matrix that must be Hurwitz has an eigenvalue in the closed right half plane."""


class AlgebraicLoopError(NumericalError):
    """An interconnection has a singular feedthrough loop."""


class RiccatiError(NumericalError):
    """A Riccati equation has no stabilizing solution or the solve failed."""


class IllConditionedError(NumericalError):
    """A matrix needed for a transform is too close to singular."""
