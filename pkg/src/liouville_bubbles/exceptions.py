"""Error types raised by the library.

Two families are distinguished so the command line front end can map them
to exit codes: ``ValidationError`` for bad inputs (exit 2) and
``NumericalError`` for solver failures (exit 3).
"""


class LiouvilleError(Exception):
    """Base class for all library errors."""


class ValidationError(LiouvilleError, ValueError):
    """Input violates a documented invariant."""


class NumericalError(LiouvilleError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


class DomainError(ValidationError):
    """Lattice generators do not describe an area-one torus."""


class SingularPoint(ValidationError):
    """Evaluation point coincides with a source point modulo the lattice."""


class NotConverged(NumericalError):
    """Series truncation or an iteration did not converge."""


class CentersTooClose(ValidationError):
    """Bubble centers violate the separation or ball-containment condition."""


class InvalidCouplingMatrix(ValidationError):
    """Coupling matrix is not symmetric, nonnegative, invertible and irreducible."""


class MassInfeasible(ValidationError):
    """Mass vector is off the critical hypersurface or fails the subset test."""


class ShootingDiverged(NumericalError):
    """Newton iteration on the initial-value to mass map failed."""


class AsymptoticsMismatch(NumericalError):
    """Fitted decay slope disagrees with the algebraic exponent."""


class DegenerateExponent(ValidationError):
    """Some decay exponent is not strictly larger than two."""


class Degenerate(NumericalError):
    """Critical point has a near-zero Hessian eigenvalue."""

    def __init__(self, message, configuration=None):
        super().__init__(message)
        self.configuration = configuration


class CollisionDuringIteration(NumericalError):
    """Centers merged during the critical-point iteration."""


class QuadratureDiverging(NumericalError):
    """Singular quadrature failed to stabilize under refinement."""


class PartitionViolation(ValidationError):
    """A cutoff ball is not contained in its partition cell."""


class Inconclusive(NumericalError):
    """A decisive sum is below its propagated error."""


class NoCaseApplies(NumericalError):
    """None of the three case conditions holds."""


class GridTooCoarse(ValidationError):
    """Grid spacing does not resolve the smallest bubble scale."""


class NoRoot(NumericalError):
    """One-dimensional solve for the parameter shift failed."""


class CaseMismatch(ValidationError):
    """Requested prediction does not match the classified case."""


class SingularMatrix(NumericalError):
    """Reduction matrix is numerically singular."""


class LinearSolveFailed(NumericalError):
    """Linear solve inside the Newton corrector failed."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NewtonStalled(NumericalError):
    """Newton corrector stopped making progress."""
