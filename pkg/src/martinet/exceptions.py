"""Exception hierarchy shared by the numerical modules."""


class MartinetError(Exception):
    """Base class for all errors raised by this package."""


class NonConverged(MartinetError):
    """An eigenvalue did not settle between grid resolutions."""


class TruncationTooSmall(MartinetError):
    """The eigenfunction is not negligible at the Dirichlet walls."""


class OutOfDomain(MartinetError, ValueError):
    """A point falls outside the truncated spatial domain."""


class OutOfRange(MartinetError, ValueError):
    """A parameter lies outside the range covered by a table."""


class DomainError(MartinetError, ValueError):
    """An asymptotic formula was evaluated outside its regime."""


class NoInteriorMinimum(MartinetError):
    """The speed profile is monotone on the tabulated range."""


class ResolutionError(MartinetError):
    """Doubling the quadrature resolution changed the field too much."""


class DegeneratePhase(MartinetError):
    """The phase has a degenerate critical point (F'' vanishes)."""


class ZeroField(MartinetError):
    """A field slice carries no energy."""
