"""Exception and warning types shared across the package."""


class FluidNetError(Exception):
    """Base class for all fluidnet errors."""


class SpecError(FluidNetError):
    """A network description failed validation."""


class SpectralRadiusTooLarge(SpecError):
    """Routing matrix has spectral radius >= 1, so fluid never leaves."""


class RoutingNotSubstochastic(SpecError):
    """Routing matrix has a negative entry or a row sum above one."""


class ConstituencyNotPartition(SpecError):
    """Constituency matrix does not assign every class to exactly one station."""


class NegativeRate(SpecError):
    """An arrival rate is negative or a service rate is not strictly positive."""


class BadPermutation(SpecError):
    """Priority order is not a permutation of the class indices."""


class DimensionMismatch(FluidNetError):
    """Array shapes are inconsistent with the declared class/station counts."""


class InfeasibleActiveSet(FluidNetError):
    """No admissible control exists for the requested boundary configuration."""


class StepTooLarge(FluidNetError):
    """Event splitting exceeded the sub-step budget; reduce the step size."""


class NonpositiveScale(FluidNetError):
    """Time scaling requires a strictly positive factor."""


class ShiftBeyondHorizon(FluidNetError):
    """Requested shift or cut time lies outside the sampled time range."""


class EndpointMismatch(FluidNetError):
    """Concatenation endpoints differ beyond tolerance."""


class UnknownFixture(FluidNetError):
    """No built-in path family with the requested name."""


class NotCompletelyS(FluidNetError):
    """Reflection matrix is not completely-S, so the problem may have no solution."""


class PushBoundExceeded(FluidNetError):
    """The minimal boundary push exceeds the configured control bound."""


class DimensionTooLarge(FluidNetError):
    """Combinatorial check refused: too many principal submatrices or active indices."""


class EventBudgetExceeded(FluidNetError):
    """Discrete-event simulation exceeded its event budget."""


class IoError(FluidNetError):
    """Writing an artifact to disk failed."""


class ParseError(FluidNetError):
    """A network description file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}" + (
                f", column {column})" if column is not None else ")"
            )
        super().__init__(message)
        self.line = line
        self.column = column


class TruncatedWarning(UserWarning):
    """Integral computed on a trajectory that never drained; value is a lower bound."""
