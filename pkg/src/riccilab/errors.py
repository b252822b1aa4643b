"""Exception hierarchy for riccilab."""


class RicciLabError(Exception):
    """Base class for all riccilab errors."""


class ChartMismatchError(RicciLabError):
    """Fields defined on different grid charts were combined."""


class NonPositiveDefiniteError(RicciLabError):
    """Metric violates the pointwise positive-definiteness floor."""


class ResolutionTooCoarseError(RicciLabError):
    """Finite-difference stencil does not fit on the grid."""


class NoConvergenceError(RicciLabError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class PositivityLossError(RicciLabError):
    """A field that must stay positive hit its floor."""


class NotDivergenceFreeError(RicciLabError):
    """Input tensor is not divergence-free to the required tolerance."""


class NonConstantScalarError(RicciLabError):
    """Scalar curvature is not constant to the required tolerance."""


class NonPositiveScalarError(RicciLabError):
    """Scalar curvature is not positive."""


class NonPositiveMuError(RicciLabError):
    """Einstein constant must be positive for this operation."""


class NonEinsteinBackgroundError(RicciLabError):
    """Closed-form Einstein-background expression requested off an Einstein background."""


class ResolventPoleError(RicciLabError):
    """Eigenvalue hits the pole of the conformal-Hessian resolvent factor."""


class NotInSpectrumError(RicciLabError):
    """Requested eigenvalue is not in the model's stored spectrum."""


class ExcludedSphereError(RicciLabError):
    """The round sphere is excluded from the classifier (it is handled as a
    special case: dynamically stable)."""


class DimensionTooSmallError(RicciLabError):
    """Complex dimension too small for the requested construction."""


class NotBihomogeneousError(RicciLabError):
    """Polynomial is not bihomogeneous of the required bidegree."""


class WrongDegreeError(RicciLabError):
    """Polynomial does not have the degree/invariance required."""


class CFLViolationError(RicciLabError):
    """Requested time step exceeds the CFL bound."""


class MetricDegenerateError(RicciLabError):
    """Flow metric hit the positivity floor."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class TauFlowUnavailableError(RicciLabError):
    """tau-flow requires lambda(g) > 0, which the backend cannot provide."""


class InsufficientSnapshotsError(RicciLabError):
    """Trace does not hold enough snapshots for interpolation."""


class InsufficientDataError(RicciLabError):
    """Not enough data points for a fit."""


class StepUnderflowError(RicciLabError):
    """Finite-difference step size underflowed."""


class NoisyFunctionalError(RicciLabError):
    """Finite-difference error ladder is not monotone; functional too noisy."""


class ConfigInvalidError(RicciLabError):
    """Invalid CLI configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnknownCommandError(RicciLabError):
    """Unknown CLI subcommand."""
