"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameter values outside a family's admissible region."""


class InfiniteMomentError(ArithmeticError):
    """A requested moment of the ratio rho_0 is infinite."""


class DivergentSeriesError(ArithmeticError):
    """A stationary moment series does not converge for the given model."""


class RunawayWalkError(RuntimeError):
    """The walk exceeded its step budget before hitting the target site."""


class RegionUnavailableError(ValueError):
    """A confidence region cannot be built from an estimate report."""
