"""Exception types raised by the solvers and oracles."""


class TrajOptError(Exception):
    """Base class for all library errors."""


class DimensionError(TrajOptError, ValueError):
    pass


class DivergedTrajectoryError(TrajOptError):
    """A roll-out produced a non-finite state."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite state encountered at t={t}")


class DeterministicProblemError(TrajOptError):
    """A noise-dependent operation was requested on a problem with q = 0."""


class CapabilityError(TrajOptError):
    """The dynamics do not provide the requested derivatives."""


class IllConditionedSubproblemError(TrajOptError):
    """``W_uu`` failed a positive-definite factorization."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"W_uu not positive definite at t={t}")


class IndefiniteModelError(IllConditionedSubproblemError):
    """The regularization loop exceeded its cap without reaching ``W_uu > 0``."""

    def __init__(self, t, lam):
        self.lam = lam
        super().__init__(t, f"regularization overflow at t={t} (lambda > {lam:g})")


class NoDecreaseError(TrajOptError):
    """A line search could not find a step decreasing the objective."""


class LineSearchError(TrajOptError):
    """A step-size search underflowed without meeting its acceptance test."""


class UnsupportedStructureError(TrajOptError):
    """The problem does not have the structure an operation requires."""
