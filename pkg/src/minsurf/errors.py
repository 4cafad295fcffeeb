"""Exception hierarchy shared across the package."""


class MinsurfError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MinsurfError):
    """Arguments violate a documented precondition (non-finite entries,
    shape mismatch, infeasible sampler parameters, ...)."""


class InvalidMetricError(InvalidInputError):
    """A metric field violates g >= id beyond tolerance."""


class InvalidMeshError(InvalidInputError):
    """Mesh with degenerate or inverted triangles."""


class DegenerateInputError(InvalidInputError):
    """Input too close to a degenerate configuration for the requested
    decomposition (e.g. vanishing first column in the orthogonal split)."""


class ConvergenceError(MinsurfError):
    """Iteration failed to reach the requested tolerance.

    Carries the last iterate / residual so callers can inspect or save it.
    """

    def __init__(self, message, last_iterate=None, residual=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.history = history


class OutOfDomainError(MinsurfError):
    """A target point lies outside the image of the map being inverted."""


class NotInjectiveError(MinsurfError):
    """Per-cell orientation check failed: the map flips orientation."""
