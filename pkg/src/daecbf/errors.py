"""Exception types raised across the toolkit."""


class DaeCbfError(Exception):
    """Base class for all toolkit errors."""


class NonFinite(DaeCbfError, ValueError):
    """An input or an evaluated quantity contains NaN or Inf."""


class NoConvergence(DaeCbfError):
    """Newton iteration failed to reach the requested residual."""

    def __init__(self, message, last_iterate=None, residual_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm


class RegularityViolated(DaeCbfError):
    """The extended constraint Jacobian loses full row rank at some probe."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class InconsistentIndex(DaeCbfError):
    """The declared differentiation index is contradicted by a rank check."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class OffManifold(DaeCbfError):
    """A state is farther from the constraint manifold than manifold_tol."""


class DegenerateRow(DaeCbfError):
    """The barrier constraint has (numerically) no input authority."""


class StructuralInfeasibility(DaeCbfError):
    """A compatibility row has zero input coefficients but nonzero drift."""


class MaxIterations(DaeCbfError):
    """An iterative solver hit its iteration cap."""


class OracleDisagreement(DaeCbfError):
    """Two independent verification routes disagree on the verdict."""

    def __init__(self, message, nlp_value=None, grid_value=None):
        super().__init__(message)
        self.nlp_value = nlp_value
        self.grid_value = grid_value


class NoBoundarySamples(DaeCbfError):
    """No sampled state landed in the boundary band of the barrier."""
