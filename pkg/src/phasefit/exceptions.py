"""Exception types raised by the phasefit library."""


class PhasefitError(Exception):
    """Base class for all phasefit errors."""


class DomainError(PhasefitError):
    """An evaluation point lies outside the support of the distribution."""


class SingularMatrixError(PhasefitError):
    """A linear solve hit a pivot below the singularity tolerance."""


class NumericalUnderflowError(PhasefitError):
    """A density or interval probability underflowed to (effectively) zero."""


class DegenerateMarginalError(PhasefitError):
    """A coordinate of a multivariate model has no positive rewards."""


class BetaSearchFailedError(PhasefitError):
    """The transform-parameter ascent could not find a feasible step."""


class UnsupportedModelError(PhasefitError):
    """The requested operation is not defined for this model type."""
