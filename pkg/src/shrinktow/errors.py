"""Exception types shared across the package."""


class ShrinktowError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ShrinktowError, ValueError):
    """An argument is outside the mathematically admissible range."""


class AmbiguousProjection(ShrinktowError):
    """Nearest boundary point is not unique at this location."""


class NotOnBoundary(ShrinktowError):
    """A boundary-only operation was called with an off-boundary point."""


class BadNormalization(ShrinktowError, ValueError):
    """A direction vector violates its required normalization."""


class EmptyIntersection(ShrinktowError):
    """A ball/ellipsoid intersected with the domain contains no quadrature node.

    Cannot occur for points of the closed domain at admissible step sizes;
    raised to surface geometry bugs instead of silently averaging nothing.
    """


class OutsideBoundaryStrip(ShrinktowError):
    """Boundary data was evaluated outside its strip of definition."""


class NoConvergence(ShrinktowError):
    """Fixed-point iteration hit its iteration cap before closing the bracket."""

    def __init__(self, message, iterations=None, gap=None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class RejectionBudgetExceeded(ShrinktowError):
    """Rejection sampler exhausted its draw budget (degenerate geometry)."""


class MaxStepsExceeded(ShrinktowError):
    """A game episode ran past its step cap without terminating."""


class InsufficientPairs(ShrinktowError):
    """Too few admissible point pairs to estimate an oscillation modulus."""


class ConfigError(ShrinktowError, ValueError):
    """A run configuration is missing a key or holds an invalid value."""
